//! Decorator-style processor chains.
//!
//! A chain reads inside out: `out.use_on(ctx, search.use_on(ctx, filter.use_on(ctx, src)?)?)`
//! applies `filter` first. Every stream carries an element type tag that
//! adjacent processors must agree on.

use alloc::string::String;
use alloc::sync::Arc;

use crate::stream::{ReceiverSpec, Stream, StreamError, StreamingContext};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("{processor} expects {expected} elements but got {found}")]
    TypeTagMismatch {
        processor: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error(transparent)]
    Stream(#[from] StreamError),
}

/// A stream plus the type tag of its elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TypedStream {
    pub stream: Stream,
    pub tag: &'static str,
}

/// An input stream created once and handed out to any number of chains.
#[derive(Debug, Clone, Copy)]
pub struct TypedSource {
    stream: TypedStream,
}

impl TypedSource {
    pub fn new(ctx: &mut StreamingContext, receiver: ReceiverSpec, tag: &'static str) -> Self {
        TypedSource {
            stream: TypedStream {
                stream: ctx.input_stream(receiver),
                tag,
            },
        }
    }

    pub fn stream(&self) -> TypedStream {
        self.stream
    }
}

type PreFn =
    Arc<dyn Fn(&mut StreamingContext, Stream) -> Result<Stream, StreamError> + Send + Sync>;
type OutFn = Arc<dyn Fn(&mut StreamingContext, Stream) -> Result<(), StreamError> + Send + Sync>;

fn check(name: &str, expected: &'static str, found: &'static str) -> Result<(), ChainError> {
    if expected != found {
        return Err(ChainError::TypeTagMismatch {
            processor: String::from(name),
            expected,
            found,
        });
    }
    Ok(())
}

/// Typed stream to typed stream.
#[derive(Clone)]
pub struct PreProcessor {
    name: String,
    input: &'static str,
    output: &'static str,
    f: PreFn,
}

impl PreProcessor {
    pub fn new<F>(name: &str, input: &'static str, output: &'static str, f: F) -> Self
    where
        F: Fn(&mut StreamingContext, Stream) -> Result<Stream, StreamError> + Send + Sync + 'static,
    {
        PreProcessor {
            name: String::from(name),
            input,
            output,
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn use_on(
        &self,
        ctx: &mut StreamingContext,
        s: TypedStream,
    ) -> Result<TypedStream, ChainError> {
        check(&self.name, self.input, s.tag)?;
        Ok(TypedStream {
            stream: (self.f)(ctx, s.stream)?,
            tag: self.output,
        })
    }
}

/// Terminal processor: registers the effects of a typed stream.
#[derive(Clone)]
pub struct OutputProcessor {
    name: String,
    input: &'static str,
    f: OutFn,
}

impl OutputProcessor {
    pub fn new<F>(name: &str, input: &'static str, f: F) -> Self
    where
        F: Fn(&mut StreamingContext, Stream) -> Result<(), StreamError> + Send + Sync + 'static,
    {
        OutputProcessor {
            name: String::from(name),
            input,
            f: Arc::new(f),
        }
    }

    pub fn use_on(&self, ctx: &mut StreamingContext, s: TypedStream) -> Result<(), ChainError> {
        check(&self.name, self.input, s.tag)?;
        (self.f)(ctx, s.stream)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Value;

    fn source(ctx: &mut StreamingContext) -> TypedSource {
        TypedSource::new(
            ctx,
            ReceiverSpec::new("t", "g", true, |_, _| Ok(Value::Unit)),
            "vehicle",
        )
    }

    #[test]
    fn tags_must_match() {
        let mut ctx = StreamingContext::new(1000).unwrap();
        let src = source(&mut ctx);
        let to_station = PreProcessor::new("search", "vehicle", "station", |c, s| {
            Ok(c.map(s, |_, v| v.clone()))
        });
        let station_only = PreProcessor::new("price", "station", "station", |_, s| Ok(s));
        let s = to_station.use_on(&mut ctx, src.stream()).unwrap();
        assert_eq!(s.tag, "station");
        assert!(station_only.use_on(&mut ctx, s).is_ok());
        let err = station_only.use_on(&mut ctx, src.stream()).unwrap_err();
        assert_eq!(
            err,
            ChainError::TypeTagMismatch {
                processor: "price".into(),
                expected: "station",
                found: "vehicle"
            }
        );
    }

    #[test]
    fn source_feeds_two_chains() {
        let mut ctx = StreamingContext::new(1000).unwrap();
        let src = source(&mut ctx);
        let out = OutputProcessor::new("sink", "vehicle", |c, s| {
            c.foreach_batch(s, |_, _| Ok(()));
            Ok(())
        });
        out.use_on(&mut ctx, src.stream()).unwrap();
        out.use_on(&mut ctx, src.stream()).unwrap();
        assert_eq!(ctx.receivers().len(), 1);
    }
}
