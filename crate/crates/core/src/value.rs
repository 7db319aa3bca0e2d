//! The engine's dynamic value model.
//!
//! Every element flowing through a dataset is a [`Value`]. Scalars, strings,
//! pairs and lists cover the keyed operators; domain records travel as
//! [`Object`]s, which are opaque to the engine and may not be used as keys.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::any::Any;
use core::cmp::Ordering;
use core::fmt;

/// An element of a dataset.
#[derive(Clone)]
pub enum Value {
    Unit,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(Arc<str>),
    Bytes(Arc<[u8]>),
    Pair(Arc<(Value, Value)>),
    List(Arc<Vec<Value>>),
    Object(Object),
}

impl Value {
    pub fn str(s: &str) -> Self {
        Value::Str(Arc::from(s))
    }

    pub fn pair(key: Value, value: Value) -> Self {
        Value::Pair(Arc::new((key, value)))
    }

    pub fn list(items: Vec<Value>) -> Self {
        Value::List(Arc::new(items))
    }

    pub fn bytes(b: &[u8]) -> Self {
        Value::Bytes(Arc::from(b))
    }

    pub fn object<T: DynObject>(obj: T) -> Self {
        Value::Object(Object(Arc::new(obj)))
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            Value::Float(f) => Some(*f),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_pair(&self) -> Option<(&Value, &Value)> {
        match self {
            Value::Pair(p) => Some((&p.0, &p.1)),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(l) => Some(l),
            _ => None,
        }
    }

    /// Borrows the payload of an object value as `T`.
    pub fn downcast<T: DynObject>(&self) -> Option<&T> {
        match self {
            Value::Object(o) => o.downcast::<T>(),
            _ => None,
        }
    }

    /// Whether the value can serve as a partitioning key. Objects and floats
    /// anywhere inside the value disqualify it.
    pub fn is_keyable(&self) -> bool {
        match self {
            Value::Object(_) | Value::Float(_) => false,
            Value::Pair(p) => p.0.is_keyable() && p.1.is_keyable(),
            Value::List(l) => l.iter().all(Value::is_keyable),
            _ => true,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Unit => 0,
            Value::Bool(_) => 1,
            Value::Int(_) => 2,
            Value::Float(_) => 3,
            Value::Str(_) => 4,
            Value::Bytes(_) => 5,
            Value::Pair(_) => 6,
            Value::List(_) => 7,
            Value::Object(_) => 8,
        }
    }

    /// FNV-1a hash over a canonical encoding. Stable across runs and
    /// platforms, which the hash partitioner and persisted state rely on.
    pub fn stable_hash(&self) -> u64 {
        let mut h = Fnv::new();
        self.hash_into(&mut h);
        h.finish()
    }

    fn hash_into(&self, h: &mut Fnv) {
        h.write(&[self.rank()]);
        match self {
            Value::Unit => {}
            Value::Bool(b) => h.write(&[*b as u8]),
            Value::Int(i) => h.write(&i.to_le_bytes()),
            Value::Float(f) => h.write(&f.to_bits().to_le_bytes()),
            Value::Str(s) => {
                h.write(&(s.len() as u64).to_le_bytes());
                h.write(s.as_bytes());
            }
            Value::Bytes(b) => {
                h.write(&(b.len() as u64).to_le_bytes());
                h.write(b);
            }
            Value::Pair(p) => {
                p.0.hash_into(h);
                p.1.hash_into(h);
            }
            Value::List(l) => {
                h.write(&(l.len() as u64).to_le_bytes());
                for v in l.iter() {
                    v.hash_into(h);
                }
            }
            Value::Object(o) => h.write(o.type_tag().as_bytes()),
        }
    }
}

struct Fnv(u64);

impl Fnv {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;

    fn new() -> Self {
        Fnv(Self::OFFSET)
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(Self::PRIME);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Unit, Value::Unit) => true,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Bytes(a), Value::Bytes(b)) => a == b,
            (Value::Pair(a), Value::Pair(b)) => a.0 == b.0 && a.1 == b.1,
            (Value::List(a), Value::List(b)) => a == b,
            (Value::Object(a), Value::Object(b)) => a.0.dyn_eq(b.0.as_ref()),
            _ => false,
        }
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Total order for keyable values. Objects only order by type tag; they are
/// never keys, so the weaker order never reaches a map.
impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Bytes(a), Value::Bytes(b)) => a.cmp(b),
            (Value::Pair(a), Value::Pair(b)) => a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)),
            (Value::List(a), Value::List(b)) => a.as_slice().cmp(b.as_slice()),
            (Value::Object(a), Value::Object(b)) => a.type_tag().cmp(b.type_tag()),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("()"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Bytes(b) => write!(f, "b[{}]", b.len()),
            Value::Pair(p) => write!(f, "({:?}, {:?})", p.0, p.1),
            Value::List(l) => f.debug_list().entries(l.iter()).finish(),
            Value::Object(o) => o.0.fmt(f),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::str(v)
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(Arc::from(v))
    }
}

impl<A: Into<Value>, B: Into<Value>> From<(A, B)> for Value {
    fn from((a, b): (A, B)) -> Self {
        Value::pair(a.into(), b.into())
    }
}

/// Domain payload carried inside a [`Value`].
pub trait DynObject: Any + fmt::Debug + Send + Sync {
    fn type_tag(&self) -> &'static str;
    fn dyn_eq(&self, other: &dyn DynObject) -> bool;
    fn as_any(&self) -> &dyn Any;
}

impl<T: Any + fmt::Debug + PartialEq + Send + Sync> DynObject for T {
    fn type_tag(&self) -> &'static str {
        core::any::type_name::<T>()
    }

    fn dyn_eq(&self, other: &dyn DynObject) -> bool {
        other.as_any().downcast_ref::<T>() == Some(self)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Shared handle to a domain object.
#[derive(Clone)]
pub struct Object(Arc<dyn DynObject>);

impl Object {
    pub fn type_tag(&self) -> &'static str {
        self.0.type_tag()
    }

    pub fn downcast<T: DynObject>(&self) -> Option<&T> {
        self.0.as_any().downcast_ref::<T>()
    }
}
