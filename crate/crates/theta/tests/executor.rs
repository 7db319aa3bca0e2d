use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use theta::executor::ThreadedExecutor;
use theta_core::engine::{Engine, WorkerId};
use theta_core::stream::{ReceiverSpec, StreamConfig, StreamingApp, StreamingContext};
use theta_core::theta::Services;
use theta_core::Value;

#[path = "../../core/tests/common/chains.rs"]
mod chains;

#[test]
fn threaded_chains_match_inline() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let c = chains::random_chain(&mut rng);
        let mut inline = Engine::local(4);
        let mut threaded = Engine::local(4);
        threaded.set_executor(Arc::new(ThreadedExecutor::new(4)));
        let a = *chains::build_chain(&mut inline, &c).last().unwrap();
        let b = *chains::build_chain(&mut threaded, &c).last().unwrap();
        assert_eq!(
            inline.collect_partitions(a).unwrap(),
            threaded.collect_partitions(b).unwrap()
        );
        assert_eq!(inline.metrics(), threaded.metrics());
        assert_eq!(inline.take_cost(), threaded.take_cost());
    }
}

#[test]
fn thread_count_is_at_least_one() {
    assert_eq!(ThreadedExecutor::new(0).threads(), 1);
    assert!(ThreadedExecutor::per_core().threads() >= 1);
}

fn squares() -> StreamingContext {
    let mut ctx = StreamingContext::new(1000).unwrap();
    let s = ctx.input_stream(ReceiverSpec::new("in", "app", true, |_, p| {
        std::str::from_utf8(p)
            .ok()
            .and_then(|s| s.parse::<i64>().ok())
            .map(Value::Int)
            .ok_or_else(|| "not a number".to_string())
    }));
    let sq = ctx.map(s, |_, v| Value::Int(v.as_int().unwrap().pow(2)));
    ctx.foreach_batch(sq, |oc, items| {
        oc.services.sink.write("out", oc.batch_id, items.to_vec());
        Ok(())
    });
    ctx
}

#[test]
fn threaded_stream_matches_inline() {
    let run = |cfg: StreamConfig| {
        let mut svc = Services::new();
        let slots = vec![WorkerId(0), WorkerId(1), WorkerId(0), WorkerId(1)];
        let mut app = StreamingApp::start(squares(), cfg, slots, 0, &mut svc).unwrap();
        for i in 0..3000i64 {
            let t = i as u64 * 3;
            app.advance_to(t, &mut svc).unwrap();
            svc.broker.publish("in", i.to_string().as_bytes(), t);
        }
        app.advance_to(15_000, &mut svc).unwrap();
        let out: Vec<(u64, Value)> = svc.sink.items("out").map(|(b, v)| (b, v.clone())).collect();
        (out, app.stats().to_vec())
    };
    let inline = run(StreamConfig::default());
    let threaded = run(StreamConfig {
        executor: Some(Arc::new(ThreadedExecutor::new(3))),
        ..StreamConfig::default()
    });
    assert_eq!(inline.0.len(), 3000);
    assert_eq!(inline, threaded);
}
