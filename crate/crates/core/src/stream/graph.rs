use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{StreamError, MAX_INTERVAL_MS, MIN_INTERVAL_MS};
use crate::engine::{
    Dataset, Engine, EngineError, FilterFn, FlatMapFn, MapFn, Partitioner, StateCall, StateFn,
    StateOutcome, TaskContext,
};
use crate::theta::{MessageId, Services};
use crate::value::Value;

pub type DecodeFn = Arc<dyn Fn(MessageId, &[u8]) -> Result<Value, String> + Send + Sync>;
pub type TransformFn =
    Arc<dyn Fn(&mut Engine, Dataset) -> Result<Dataset, EngineError> + Send + Sync>;
pub type OutputFn =
    Arc<dyn Fn(&mut OutputContext<'_>, &[Value]) -> Result<(), String> + Send + Sync>;

/// Where a receiver reads from and how it turns payloads into values.
#[derive(Clone)]
pub struct ReceiverSpec {
    pub topic: String,
    pub group: String,
    /// Reliable receivers acknowledge the broker only once a block is
    /// stored; unreliable ones take messages in auto-ack mode.
    pub reliable: bool,
    pub decode: DecodeFn,
}

impl ReceiverSpec {
    pub fn new<F>(topic: &str, group: &str, reliable: bool, decode: F) -> Self
    where
        F: Fn(MessageId, &[u8]) -> Result<Value, String> + Send + Sync + 'static,
    {
        ReceiverSpec {
            topic: topic.to_string(),
            group: group.to_string(),
            reliable,
            decode: Arc::new(decode),
        }
    }
}

/// What an output function sees when a batch commits.
pub struct OutputContext<'a> {
    pub batch_id: u64,
    pub batch_time_ms: u64,
    pub services: &'a mut Services,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub length_ms: u64,
    pub slide_ms: u64,
}

impl WindowSpec {
    pub fn new(length_ms: u64, slide_ms: u64) -> Self {
        WindowSpec {
            length_ms,
            slide_ms,
        }
    }

    /// Window length and slide in intervals.
    pub fn intervals(&self, interval_ms: u64) -> Result<(u64, u64), StreamError> {
        let ok = |x: u64| x > 0 && x.is_multiple_of(interval_ms);
        if !ok(self.length_ms) || !ok(self.slide_ms) {
            return Err(StreamError::InvalidWindow {
                length_ms: self.length_ms,
                slide_ms: self.slide_ms,
            });
        }
        Ok((self.length_ms / interval_ms, self.slide_ms / interval_ms))
    }
}

/// Keyed-state options: number of state partitions and idle timeout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpec {
    pub partitions: usize,
    pub ttl_ms: Option<u64>,
}

impl Default for StateSpec {
    fn default() -> Self {
        StateSpec {
            partitions: 4,
            ttl_ms: None,
        }
    }
}

#[derive(Clone)]
pub(crate) enum NodeKind {
    Input(usize),
    Map(MapFn),
    Filter(FilterFn),
    FlatMap(FlatMapFn),
    Transform(TransformFn),
    Union,
    Join(Option<Partitioner>),
    Window {
        length: u64,
        slide: u64,
    },
    State {
        op: u32,
        update: StateFn,
        spec: StateSpec,
    },
    /// `(key, state)` for every live key.
    EmitState,
    /// Values emitted by the update function.
    Emit,
}

#[derive(Clone)]
pub(crate) struct StreamNode {
    pub kind: NodeKind,
    pub parents: Vec<usize>,
}

#[derive(Clone)]
pub(crate) struct OutputSpec {
    pub node: usize,
    pub f: OutputFn,
}

/// Handle to a stream defined in a [`StreamingContext`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stream {
    pub(crate) node: usize,
    /// Interval between two datasets of this stream.
    pub(crate) slide_ms: u64,
}

impl Stream {
    pub fn slide_ms(&self) -> u64 {
        self.slide_ms
    }
}

/// Declarative description of a streaming application. Rebuilt from the
/// application factory whenever a driver (re)starts.
#[derive(Clone)]
pub struct StreamingContext {
    interval_ms: u64,
    pub(crate) nodes: Vec<StreamNode>,
    pub(crate) receivers: Vec<ReceiverSpec>,
    pub(crate) outputs: Vec<OutputSpec>,
    next_state_op: u32,
}

impl StreamingContext {
    pub fn new(batch_interval_ms: u64) -> Result<Self, StreamError> {
        if !(MIN_INTERVAL_MS..=MAX_INTERVAL_MS).contains(&batch_interval_ms) {
            return Err(StreamError::IntervalOutOfRange(batch_interval_ms));
        }
        Ok(StreamingContext {
            interval_ms: batch_interval_ms,
            nodes: Vec::new(),
            receivers: Vec::new(),
            outputs: Vec::new(),
            next_state_op: 0,
        })
    }

    pub fn batch_interval_ms(&self) -> u64 {
        self.interval_ms
    }

    pub fn receivers(&self) -> &[ReceiverSpec] {
        &self.receivers
    }

    fn push(&mut self, kind: NodeKind, parents: Vec<usize>, slide_ms: u64) -> Stream {
        self.nodes.push(StreamNode { kind, parents });
        Stream {
            node: self.nodes.len() - 1,
            slide_ms,
        }
    }

    pub fn input_stream(&mut self, receiver: ReceiverSpec) -> Stream {
        self.receivers.push(receiver);
        let r = self.receivers.len() - 1;
        let interval = self.interval_ms;
        self.push(NodeKind::Input(r), Vec::new(), interval)
    }

    pub fn map<F>(&mut self, s: Stream, f: F) -> Stream
    where
        F: Fn(&mut TaskContext<'_>, &Value) -> Value + Send + Sync + 'static,
    {
        self.push(NodeKind::Map(Arc::new(f)), vec![s.node], s.slide_ms)
    }

    pub fn filter<F>(&mut self, s: Stream, f: F) -> Stream
    where
        F: Fn(&mut TaskContext<'_>, &Value) -> bool + Send + Sync + 'static,
    {
        self.push(NodeKind::Filter(Arc::new(f)), vec![s.node], s.slide_ms)
    }

    pub fn flat_map<F>(&mut self, s: Stream, f: F) -> Stream
    where
        F: Fn(&mut TaskContext<'_>, &Value) -> Vec<Value> + Send + Sync + 'static,
    {
        self.push(NodeKind::FlatMap(Arc::new(f)), vec![s.node], s.slide_ms)
    }

    /// Applies an arbitrary dataset-to-dataset function per interval.
    pub fn transform<F>(&mut self, s: Stream, f: F) -> Stream
    where
        F: Fn(&mut Engine, Dataset) -> Result<Dataset, EngineError> + Send + Sync + 'static,
    {
        self.push(NodeKind::Transform(Arc::new(f)), vec![s.node], s.slide_ms)
    }

    pub fn union(&mut self, a: Stream, b: Stream) -> Result<Stream, StreamError> {
        self.same_slide(a, b)?;
        Ok(self.push(NodeKind::Union, vec![a.node, b.node], a.slide_ms))
    }

    pub fn join(
        &mut self,
        a: Stream,
        b: Stream,
        partitioner: Option<Partitioner>,
    ) -> Result<Stream, StreamError> {
        self.same_slide(a, b)?;
        Ok(self.push(
            NodeKind::Join(partitioner),
            vec![a.node, b.node],
            a.slide_ms,
        ))
    }

    fn same_slide(&self, a: Stream, b: Stream) -> Result<(), StreamError> {
        if a.slide_ms != b.slide_ms {
            return Err(StreamError::IntervalMismatch {
                left_ms: a.slide_ms,
                right_ms: b.slide_ms,
            });
        }
        Ok(())
    }

    /// Output at each slide boundary `t` is the union of the parent's
    /// datasets for intervals `(t - length, t]`.
    pub fn window(&mut self, s: Stream, spec: WindowSpec) -> Result<Stream, StreamError> {
        let (length, slide) = spec.intervals(self.interval_ms)?;
        if s.slide_ms != self.interval_ms {
            return Err(StreamError::IntervalMismatch {
                left_ms: s.slide_ms,
                right_ms: self.interval_ms,
            });
        }
        Ok(self.push(
            NodeKind::Window { length, slide },
            vec![s.node],
            spec.slide_ms,
        ))
    }

    fn state_node(&mut self, s: Stream, update: StateFn, spec: StateSpec) -> Stream {
        let op = self.next_state_op;
        self.next_state_op += 1;
        let spec = StateSpec {
            partitions: spec.partitions.max(1),
            ..spec
        };
        self.push(
            NodeKind::State { op, update, spec },
            vec![s.node],
            s.slide_ms,
        )
    }

    /// Keeps one state per key. `update(key, new_values, old_state)` returns
    /// the new state, or `None` to remove the key. Emits `(key, state)`.
    pub fn update_state_by_key<F>(&mut self, s: Stream, spec: StateSpec, update: F) -> Stream
    where
        F: Fn(&Value, &[Value], Option<&Value>) -> Option<Value> + Send + Sync + 'static,
    {
        let f: StateFn = Arc::new(move |_, call: StateCall<'_>| StateOutcome {
            state: update(call.key, call.values, call.state),
            emit: Vec::new(),
        });
        let st = self.state_node(s, f, spec);
        self.push(NodeKind::EmitState, vec![st.node], st.slide_ms)
    }

    /// Like [`StreamingContext::update_state_by_key`], but the function also
    /// decides what to emit.
    pub fn map_with_state<F>(&mut self, s: Stream, spec: StateSpec, f: F) -> Stream
    where
        F: Fn(&mut TaskContext<'_>, StateCall<'_>) -> StateOutcome + Send + Sync + 'static,
    {
        let st = self.state_node(s, Arc::new(f), spec);
        self.push(NodeKind::Emit, vec![st.node], st.slide_ms)
    }

    /// Registers an output. It runs once per produced dataset, in batch
    /// order, including replays after a restart.
    pub fn foreach_batch<F>(&mut self, s: Stream, f: F)
    where
        F: Fn(&mut OutputContext<'_>, &[Value]) -> Result<(), String> + Send + Sync + 'static,
    {
        self.outputs.push(OutputSpec {
            node: s.node,
            f: Arc::new(f),
        });
    }

    pub(crate) fn max_window(&self) -> u64 {
        self.nodes
            .iter()
            .map(|n| match n.kind {
                NodeKind::Window { length, .. } => length,
                _ => 1,
            })
            .max()
            .unwrap_or(1)
    }

    /// Whether `node` depends on keyed state.
    pub(crate) fn downstream_of_state(&self, node: usize) -> bool {
        let n = &self.nodes[node];
        matches!(n.kind, NodeKind::State { .. })
            || n.parents.iter().any(|p| self.downstream_of_state(*p))
    }
}
