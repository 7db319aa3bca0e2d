use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use theta::data::{read_prices, read_readings, read_stations};
use theta::demo::listing_demo;
use theta::harness::{
    read_plan, run_failover, run_scaling_experiment, synthetic_world, DeploymentConfig,
    FailoverConfig, LoadScenario, RateSchedule, RunReport, ScenarioKind, DEFAULT_STATIONS,
};
use theta::http::{FileSink, HttpSink};
use theta::oneshot::{cis_from_files, run_pipeline, PriceFeed};
use theta_core::cis::{NotificationSink, RecommenderConfig};

#[derive(Parser)]
#[command(
    name = "theta",
    version,
    about = "Micro-batch stream processing harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steps the message rate until the backlog grows, per worker count.
    Load {
        /// ls1, ls2, ls2:<vehicles>, ls3 or gas-search.
        #[arg(long)]
        scenario: ScenarioKind,
        /// Simulated worker counts, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "2")]
        workers: Vec<u32>,
        #[arg(long, default_value_t = 500)]
        step: u32,
        /// First rate; defaults to the step.
        #[arg(long)]
        start: Option<u32>,
        #[arg(long, default_value_t = 10_000)]
        max: u32,
        /// Virtual seconds per rate step.
        #[arg(long, default_value_t = 30)]
        dwell: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_STATIONS)]
        stations: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs a fault plan under load and checks the recovery.
    Failover {
        /// JSON list of {t_ms, event, node}.
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "gas-search")]
        scenario: ScenarioKind,
        #[arg(long, default_value_t = 1000)]
        rate: u32,
        /// Virtual seconds of load.
        #[arg(long, default_value_t = 60)]
        duration: u64,
        #[arg(long, default_value_t = 3)]
        workers: u32,
        #[arg(long, default_value_t = DEFAULT_STATIONS)]
        stations: usize,
    },
    /// Runs the station search once over recorded readings.
    Recommend {
        #[arg(long)]
        stations: PathBuf,
        #[arg(long)]
        prices: PathBuf,
        /// One vehicle message per line.
        #[arg(long)]
        input: PathBuf,
        /// Live price API; prices come from the price file otherwise.
        #[arg(long)]
        price_url: Option<String>,
        /// Push endpoint receiving one POST per notification.
        #[arg(long)]
        notify_url: Option<String>,
        /// File receiving one JSON line per notification.
        #[arg(long, conflicts_with = "notify_url")]
        notify_file: Option<PathBuf>,
    },
    /// Prints the stage plans of the log-filter example.
    Stages {
        #[arg(long)]
        demo: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> theta::Result<bool> {
    match cmd {
        Command::Load {
            scenario,
            workers,
            step,
            start,
            max,
            dwell,
            seed,
            stations,
            out,
        } => {
            let schedule = RateSchedule {
                start: start.unwrap_or(step),
                step,
                max,
                dwell_s: dwell,
            };
            let cis = synthetic_world(stations, seed)?;
            let cfg = DeploymentConfig::new(LoadScenario::new(scenario), 1, seed);
            let runs = run_scaling_experiment(&workers, &cfg, &cis, &schedule)?;
            let mut report = RunReport::default();
            for r in runs {
                println!("workers={} max_rate={}", r.workers, r.max_rate);
                report.extend(r.report);
            }
            report.write_csv(&out)?;
            Ok(true)
        }
        Command::Failover {
            plan,
            seed,
            out,
            scenario,
            rate,
            duration,
            workers,
            stations,
        } => {
            let cfg = FailoverConfig {
                deployment: DeploymentConfig::new(LoadScenario::new(scenario), workers, seed),
                rate,
                duration_s: duration,
                drain_s: 120,
                plan: read_plan(&plan)?,
            };
            let cis = synthetic_world(stations, seed)?;
            let run = run_failover(&cfg, &cis)?;
            run.report.write_csv(&out)?;
            for c in &run.verdict.checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            let ok = run.verdict.passed();
            println!("{}", if ok { "PASS" } else { "FAIL" });
            Ok(ok)
        }
        Command::Recommend {
            stations,
            prices,
            input,
            price_url,
            notify_url,
            notify_file,
        } => {
            let feed = price_url.map_or(PriceFeed::History, PriceFeed::Http);
            let cis = cis_from_files(
                read_stations(&stations)?,
                read_prices(&prices)?,
                feed,
                RecommenderConfig::default(),
            )?;
            let readings = read_readings(&input)?;
            let mut boxed: Option<Box<dyn NotificationSink>> = match (notify_url, notify_file) {
                (Some(url), _) => Some(Box::new(HttpSink::new(&url))),
                (None, Some(path)) => Some(Box::new(FileSink::create(&path)?)),
                (None, None) => None,
            };
            let sink = boxed
                .as_mut()
                .map(|s| s.as_mut() as &mut dyn NotificationSink);
            let result = run_pipeline(&cis, &readings, sink)?;
            for r in &result.recommendations {
                println!("{}", r.to_json());
            }
            eprintln!(
                "{} readings, {} stored, {} rejected, {} recommendations",
                readings.len(),
                result.stored,
                result.dead_letters,
                result.recommendations.len()
            );
            if result.undelivered > 0 {
                eprintln!(
                    "{} notifications could not be delivered",
                    result.undelivered
                );
            }
            Ok(result.undelivered == 0)
        }
        Command::Stages { demo } => {
            if !demo {
                return Err(theta::Error::Invalid("only --demo is available".into()));
            }
            print!(
                "{}",
                listing_demo().map_err(|e| theta::Error::Invalid(e.to_string()))?
            );
            Ok(true)
        }
    }
}
