//! Window runs through the stream engine and the brute-force regrouping
//! they must match.

#![allow(dead_code)]

use std::collections::BTreeMap;

use theta_core::engine::WorkerId;
use theta_core::stream::{ReceiverSpec, StreamConfig, StreamingApp, StreamingContext, WindowSpec};
use theta_core::theta::Services;
use theta_core::Value;

fn int_receiver() -> ReceiverSpec {
    ReceiverSpec::new("in", "app", true, |_, p| {
        std::str::from_utf8(p)
            .ok()
            .and_then(|s| s.parse::<i64>().ok())
            .map(Value::Int)
            .ok_or_else(|| "not a number".to_string())
    })
}

fn slots(workers: u32, per_worker: u32) -> Vec<WorkerId> {
    let mut v = Vec::new();
    for _ in 0..per_worker {
        v.extend((0..workers).map(WorkerId));
    }
    v
}

/// Window output per batch id, for one-second intervals fed with
/// `per_interval`; lengths and slides in intervals.
pub fn run_window(length: u64, slide: u64, per_interval: &[Vec<i64>]) -> BTreeMap<u64, Vec<i64>> {
    let mut ctx = StreamingContext::new(1000).unwrap();
    let s = ctx.input_stream(int_receiver());
    let w = ctx
        .window(s, WindowSpec::new(length * 1000, slide * 1000))
        .unwrap();
    ctx.foreach_batch(w, |oc, items| {
        oc.services.sink.write("w", oc.batch_id, items.to_vec());
        Ok(())
    });
    let mut svc = Services::new();
    let mut app =
        StreamingApp::start(ctx, StreamConfig::default(), slots(2, 2), 0, &mut svc).unwrap();
    for (k, vals) in per_interval.iter().enumerate() {
        let t = k as u64 * 1000 + 100;
        app.advance_to(t, &mut svc).unwrap();
        for v in vals {
            svc.broker.publish("in", v.to_string().as_bytes(), t);
        }
    }
    app.advance_to(per_interval.len() as u64 * 1000 + 500, &mut svc)
        .unwrap();
    let mut out: BTreeMap<u64, Vec<i64>> = BTreeMap::new();
    for id in svc.sink.batch_ids("w") {
        let mut v: Vec<i64> = svc
            .sink
            .batch("w", id)
            .unwrap()
            .iter()
            .map(|x| x.as_int().unwrap())
            .collect();
        v.sort();
        out.insert(id, v);
    }
    out
}

pub fn brute_window(length: u64, slide: u64, per_interval: &[Vec<i64>]) -> BTreeMap<u64, Vec<i64>> {
    let mut out = BTreeMap::new();
    for b in 1..=per_interval.len() as u64 {
        if b % slide != 0 {
            continue;
        }
        let mut v: Vec<i64> = (b.saturating_sub(length) + 1..=b)
            .flat_map(|k| per_interval[k as usize - 1].clone())
            .collect();
        v.sort();
        out.insert(b, v);
    }
    out
}
