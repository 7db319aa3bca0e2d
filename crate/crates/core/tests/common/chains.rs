//! Random transform chains and DAGs with a plain list interpreter as the
//! reference answer.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use theta_core::engine::{Dataset, Engine, Stage, StageBoundary};
use theta_core::Value;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChainOp {
    /// `x * a + b`
    Map(i64, i64),
    /// keep `x mod m == r`
    Filter(i64, i64),
    /// `x -> [x, x + k]`
    FlatMap(i64),
    /// current ++ source
    UnionSource,
    /// sum per `x mod m`, then `key * 1_000_003 + sum`
    ReduceMod(i64),
    /// count per `x mod m`, then `key * 1_000 + count`
    GroupMod(i64),
    /// join `(x mod m, x)` with `(k, k * 7)` for `k < m/2`, then `x + 7k`
    JoinMod(i64),
    Persist,
}

impl ChainOp {
    pub fn is_wide(self) -> bool {
        matches!(
            self,
            ChainOp::ReduceMod(_) | ChainOp::GroupMod(_) | ChainOp::JoinMod(_)
        )
    }
}

#[derive(Debug, Clone)]
pub struct Chain {
    pub items: Vec<i64>,
    pub partitions: usize,
    pub ops: Vec<ChainOp>,
}

pub fn random_chain<R: Rng>(rng: &mut R) -> Chain {
    let n = rng.random_range(0..=100);
    let items = (0..n).map(|_| rng.random_range(-500..500)).collect();
    let partitions = rng.random_range(1..=6);
    let len = rng.random_range(0..=6);
    let ops = (0..len)
        .map(|_| match rng.random_range(0..8) {
            0 => ChainOp::Map(rng.random_range(-3..=3), rng.random_range(-10..=10)),
            1 => ChainOp::Filter(rng.random_range(1..=5), rng.random_range(0..5)),
            2 => ChainOp::FlatMap(rng.random_range(1..=4)),
            3 => ChainOp::UnionSource,
            4 => ChainOp::ReduceMod(rng.random_range(1..=7)),
            5 => ChainOp::GroupMod(rng.random_range(1..=7)),
            6 => ChainOp::JoinMod(rng.random_range(1..=7)),
            _ => ChainOp::Persist,
        })
        .collect();
    Chain {
        items,
        partitions,
        ops,
    }
}

fn int(v: &Value) -> i64 {
    v.as_int().expect("int element")
}

fn join_right(m: i64) -> Vec<(i64, i64)> {
    (0..(m + 1) / 2).map(|k| (k, k * 7)).collect()
}

/// Builds the chain in `engine`; returns every dataset, source first.
pub fn build_chain(engine: &mut Engine, c: &Chain) -> Vec<Dataset> {
    let src = engine
        .parallelize(
            c.items.iter().map(|&x| Value::Int(x)).collect(),
            c.partitions,
        )
        .unwrap();
    let mut all = vec![src];
    let mut cur = src;
    for op in &c.ops {
        cur = match *op {
            ChainOp::Map(a, b) => engine.map(cur, move |_, v| {
                Value::Int(int(v).wrapping_mul(a).wrapping_add(b))
            }),
            ChainOp::Filter(m, r) => engine.filter(cur, move |_, v| int(v).rem_euclid(m) == r),
            ChainOp::FlatMap(k) => engine.flat_map(cur, move |_, v| {
                let x = int(v);
                vec![Value::Int(x), Value::Int(x.wrapping_add(k))]
            }),
            ChainOp::UnionSource => engine.union(cur, src),
            ChainOp::ReduceMod(m) => {
                let keyed = engine.map(cur, move |_, v| {
                    Value::pair(Value::Int(int(v).rem_euclid(m)), v.clone())
                });
                all.push(keyed);
                let red = engine.reduce_by_key(
                    keyed,
                    |a, b| Value::Int(int(a).wrapping_add(int(b))),
                    None,
                );
                all.push(red);
                engine.map(red, |_, kv| {
                    let (k, s) = kv.as_pair().unwrap();
                    Value::Int(int(k).wrapping_mul(1_000_003).wrapping_add(int(s)))
                })
            }
            ChainOp::GroupMod(m) => {
                let keyed = engine.map(cur, move |_, v| {
                    Value::pair(Value::Int(int(v).rem_euclid(m)), v.clone())
                });
                all.push(keyed);
                let grp = engine.group_by_key(keyed, None);
                all.push(grp);
                engine.map(grp, |_, kv| {
                    let (k, vs) = kv.as_pair().unwrap();
                    Value::Int(int(k) * 1_000 + vs.as_list().unwrap().len() as i64)
                })
            }
            ChainOp::JoinMod(m) => {
                let keyed = engine.map(cur, move |_, v| {
                    Value::pair(Value::Int(int(v).rem_euclid(m)), v.clone())
                });
                all.push(keyed);
                let right: Vec<Value> = join_right(m)
                    .into_iter()
                    .map(|(k, w)| Value::pair(Value::Int(k), Value::Int(w)))
                    .collect();
                let right = engine.parallelize(right, 2).unwrap();
                all.push(right);
                let joined = engine.join(keyed, right, None);
                all.push(joined);
                engine.map(joined, |_, kv| {
                    let (_, lr) = kv.as_pair().unwrap();
                    let (l, r) = lr.as_pair().unwrap();
                    Value::Int(int(l).wrapping_add(int(r)))
                })
            }
            ChainOp::Persist => engine.persist(cur),
        };
        all.push(cur);
    }
    all
}

/// Reference evaluation over a plain vector.
pub fn interpret(c: &Chain) -> Vec<i64> {
    let mut cur = c.items.clone();
    for op in &c.ops {
        cur = match *op {
            ChainOp::Map(a, b) => cur
                .iter()
                .map(|x| x.wrapping_mul(a).wrapping_add(b))
                .collect(),
            ChainOp::Filter(m, r) => cur.into_iter().filter(|x| x.rem_euclid(m) == r).collect(),
            ChainOp::FlatMap(k) => cur.iter().flat_map(|&x| [x, x.wrapping_add(k)]).collect(),
            ChainOp::UnionSource => cur.iter().chain(c.items.iter()).copied().collect(),
            ChainOp::ReduceMod(m) => {
                let mut sums: BTreeMap<i64, i64> = BTreeMap::new();
                for x in cur {
                    let e = sums.entry(x.rem_euclid(m)).or_insert(0);
                    *e = e.wrapping_add(x);
                }
                sums.into_iter()
                    .map(|(k, s)| k.wrapping_mul(1_000_003).wrapping_add(s))
                    .collect()
            }
            ChainOp::GroupMod(m) => {
                let mut counts: BTreeMap<i64, i64> = BTreeMap::new();
                for x in cur {
                    *counts.entry(x.rem_euclid(m)).or_insert(0) += 1;
                }
                counts.into_iter().map(|(k, n)| k * 1_000 + n).collect()
            }
            ChainOp::JoinMod(m) => {
                let right = join_right(m);
                let mut out = Vec::new();
                for x in cur {
                    for (k, w) in &right {
                        if x.rem_euclid(m) == *k {
                            out.push(x.wrapping_add(*w));
                        }
                    }
                }
                out
            }
            ChainOp::Persist => cur,
        };
    }
    cur
}

/// Compares engine output with the interpreter. Order must match exactly
/// when the chain has no shuffle; otherwise as multisets.
pub fn matches_oracle(c: &Chain, got: &[Value]) -> bool {
    let got: Vec<i64> = got.iter().map(int).collect();
    let mut want = interpret(c);
    if c.ops.iter().any(|o| o.is_wide()) {
        let mut got = got;
        got.sort();
        want.sort();
        got == want
    } else {
        got == want
    }
}

/// Shadow description of a random DAG: per node, whether it is wide and
/// its parents.
#[derive(Debug, Clone, Default)]
pub struct Shadow {
    pub wide: Vec<bool>,
    pub parents: Vec<Vec<usize>>,
}

impl Shadow {
    /// Wide nodes the root depends on, itself included.
    pub fn wide_ancestors(&self, root: usize) -> usize {
        let mut seen = BTreeSet::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend(self.parents[n].iter().copied());
            }
        }
        seen.into_iter().filter(|&n| self.wide[n]).count()
    }
}

/// Random DAG of up to `steps` operations over keyed integer pairs.
pub fn random_dag<R: Rng>(
    rng: &mut R,
    engine: &mut Engine,
    steps: usize,
) -> (Vec<Dataset>, Shadow) {
    let mut nodes = Vec::new();
    let mut shadow = Shadow::default();
    let sources = rng.random_range(1..=3);
    for s in 0..sources {
        let items = (0..20)
            .map(|i| Value::pair(Value::Int(i % 5), Value::Int(i + s)))
            .collect();
        nodes.push(engine.parallelize(items, rng.random_range(1..=4)).unwrap());
        shadow.wide.push(false);
        shadow.parents.push(Vec::new());
    }
    for _ in 0..steps {
        let a = rng.random_range(0..nodes.len());
        let b = rng.random_range(0..nodes.len());
        let (ds, wide, parents) = match rng.random_range(0..6) {
            0 => (engine.map(nodes[a], |_, v| v.clone()), false, vec![a]),
            1 => (engine.filter(nodes[a], |_, _| true), false, vec![a]),
            2 => (engine.union(nodes[a], nodes[b]), false, vec![a, b]),
            3 => (
                engine.reduce_by_key(nodes[a], |x, _| x.clone(), None),
                true,
                vec![a],
            ),
            4 => {
                let g = engine.group_by_key(nodes[a], None);
                (
                    engine.map(g, |_, kv| {
                        Value::pair(kv.as_pair().unwrap().0.clone(), Value::Int(0))
                    }),
                    true,
                    vec![a],
                )
            }
            _ => {
                let j = engine.join(nodes[a], nodes[b], None);
                (
                    engine.map(j, |_, kv| {
                        Value::pair(kv.as_pair().unwrap().0.clone(), Value::Int(1))
                    }),
                    true,
                    vec![a, b],
                )
            }
        };
        // Group and join are followed by a narrow re-keying map; record the
        // wide node and the map separately.
        if wide
            && !engine
                .kind(ds)
                .unwrap()
                .dependency()
                .is_some_and(|d| d == theta_core::engine::DependencyKind::Wide)
        {
            let wide_ds = engine.parents(ds)[0];
            nodes.push(wide_ds);
            shadow.wide.push(true);
            shadow.parents.push(parents);
            nodes.push(ds);
            shadow.wide.push(false);
            shadow.parents.push(vec![nodes.len() - 2]);
        } else {
            nodes.push(ds);
            shadow.wide.push(wide);
            shadow.parents.push(parents);
        }
    }
    (nodes, shadow)
}

/// Checks the planner output against the boundary rule. Returns a
/// description of the first violation.
pub fn check_stage_rule(
    engine: &Engine,
    root: Dataset,
    shadow: &Shadow,
    root_idx: usize,
    nodes: &[Dataset],
) -> Result<(), String> {
    let stages: Vec<Stage> = engine.build_stages(root).map_err(|e| e.to_string())?;
    let want = shadow.wide_ancestors(root_idx) + 1;
    if stages.len() != want {
        return Err(format!("{} stages, expected {want}", stages.len()));
    }
    let index: BTreeMap<_, usize> = nodes.iter().enumerate().map(|(i, d)| (d.id(), i)).collect();
    // A wide node inside a pipeline may only be read from a shuffle written
    // by one of the stage's parents.
    for st in &stages {
        for d in &st.pipeline {
            let Some(&m) = index.get(d) else { continue };
            if !shadow.wide[m] {
                continue;
            }
            let fed = st
                .parents
                .iter()
                .any(|p| stages[p.0 as usize].boundary == StageBoundary::Shuffle(*d));
            if !fed {
                return Err(format!(
                    "stage {:?} contains wide node {m} without its shuffle stage",
                    st.id
                ));
            }
        }
    }
    for (w, st) in stages.iter().enumerate() {
        if st.parents.iter().any(|p| p.0 as usize >= w) {
            return Err("stages not in topological order".into());
        }
    }
    Ok(())
}
