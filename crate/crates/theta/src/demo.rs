//! The log-filter example: read log items, keep errors, persist them, then
//! list error times and count MySQL errors from the cached set.

use std::fmt::Write;

use theta_core::engine::{Engine, EngineError, Stage, StageBoundary};
use theta_core::Value;

fn log_items() -> Vec<Value> {
    let sources = ["MySQL", "nginx", "kernel", "cron"];
    (0..40)
        .map(|i| {
            let level = if i % 3 == 0 { "ERROR" } else { "INFO" };
            let line = format!(
                "{:02}:00:{:02} {level} {} event {i}",
                i / 10,
                i % 60,
                sources[i % 4]
            );
            Value::str(&line)
        })
        .collect()
}

fn is_error(v: &Value) -> bool {
    v.as_str().is_some_and(|s| s.contains(" ERROR "))
}

fn time_of(v: &Value) -> Value {
    Value::str(v.as_str().and_then(|s| s.split(' ').next()).unwrap_or(""))
}

fn describe(engine: &Engine, out: &mut String, stages: &[Stage]) {
    for s in stages {
        let ops: Vec<String> = s
            .pipeline
            .iter()
            .map(|id| {
                let kind = engine
                    .kind_of(*id)
                    .map_or("?".to_string(), |k| format!("{k:?}"));
                format!("{kind}#{}", id.0)
            })
            .collect();
        let end = match s.boundary {
            StageBoundary::Shuffle(d) => format!("shuffle for #{}", d.0),
            StageBoundary::Action => "action".to_string(),
        };
        let parents: Vec<String> = s.parents.iter().map(|p| p.0.to_string()).collect();
        let _ = writeln!(
            out,
            "  stage {}: {} -> {end}; parents [{}]",
            s.id.0,
            ops.join(" > "),
            parents.join(", ")
        );
    }
}

/// Runs the example and renders its stage plans and results.
pub fn listing_demo() -> Result<String, EngineError> {
    let mut e = Engine::local(2);
    let mut out = String::new();
    let input = e.parallelize(log_items(), 4)?;
    let errors = e.filter(input, |_, v| is_error(v));
    let errors = e.persist(errors);
    let error_times = e.map(errors, |_, v| time_of(v));

    let _ = writeln!(out, "errorTimes.collect()");
    describe(&e, &mut out, &e.build_stages(error_times)?);
    let times = e.collect(error_times)?;
    let shown: Vec<&str> = times.iter().filter_map(Value::as_str).collect();
    let _ = writeln!(out, "  {} error times: {}", shown.len(), shown.join(" "));

    let mysql = e.filter(errors, |_, v| {
        v.as_str().is_some_and(|s| s.contains("MySQL"))
    });
    let _ = writeln!(out, "mysqlErrors.count()");
    describe(&e, &mut out, &e.build_stages(mysql)?);
    let n = e.count(mysql)?;
    let _ = writeln!(out, "  {n} MySQL errors");
    let _ = writeln!(
        out,
        "{} input partition computations over both actions; the second one reads errors from the cache",
        e.dataset_computations(input)
    );

    let by_source = e.map(errors, |_, v| {
        let src = v.as_str().and_then(|s| s.split(' ').nth(2)).unwrap_or("");
        Value::pair(Value::str(src), Value::Int(1))
    });
    let counts = e.reduce_by_key(
        by_source,
        |a, b| Value::Int(a.as_int().unwrap_or(0) + b.as_int().unwrap_or(0)),
        None,
    );
    let _ = writeln!(out, "errors per source (reduceByKey)");
    describe(&e, &mut out, &e.build_stages(counts)?);
    let mut rows: Vec<String> = e
        .collect(counts)?
        .iter()
        .filter_map(|v| {
            v.as_pair()
                .map(|(k, c)| format!("{}={}", k.as_str().unwrap_or(""), c.as_int().unwrap_or(0)))
        })
        .collect();
    rows.sort();
    let _ = writeln!(out, "  {}", rows.join(" "));
    Ok(out)
}
