//! `window-sweep`: the checkpoint-interval tradeoff as a table: HMAC cost
//! per direction against forged payloads accepted before detection.

use std::path::PathBuf;

use anyhow::Context;
use hijacklab::attacker::{run_window_sweep, InjectAt, SweepParams, SweepRow};

use crate::{validation, CliError};

#[derive(clap::Args)]
pub struct Args {
    /// Window values to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
    windows: Vec<u32>,
    /// Honest packets per run.
    #[arg(long, default_value_t = 10_000)]
    packets: u32,
    /// Injection offset within the first window: a number in [1, W], or
    /// "random" for a fresh seeded draw per trial.
    #[arg(long, default_value = "random")]
    inject_at: String,
    /// Injection trials per window value.
    #[arg(long, default_value_t = 5)]
    trials: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the table as a JSON array here.
    #[arg(long)]
    json: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    if args.windows.is_empty() {
        return Err(validation("--windows needs at least one value"));
    }
    if args.windows.iter().any(|w| *w < 1) {
        return Err(validation("window values must be at least 1"));
    }
    if args.packets < 1 {
        return Err(validation("--packets must be at least 1"));
    }
    let inject_at = match args.inject_at.as_str() {
        "random" => InjectAt::Random,
        text => {
            let k: u32 = text
                .parse()
                .map_err(|_| validation("--inject-at takes a positive number or 'random'"))?;
            if k < 1 {
                return Err(validation("--inject-at offset must be at least 1"));
            }
            InjectAt::Offset(k)
        }
    };

    let rows = run_window_sweep(&SweepParams {
        windows: args.windows,
        packets: args.packets,
        inject_at,
        trials: args.trials,
        seed: args.seed,
    })
    .map_err(anyhow::Error::from)?;

    println!(
        "window,trials,hmac_computations,mean_exposure,max_exposure,detection_rate,elapsed_ms"
    );
    for row in &rows {
        println!("{}", csv_row(row));
    }

    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&rows).expect("rows serialize");
        std::fs::write(path, format!("{json}\n"))
            .with_context(|| format!("cannot write table {}", path.display()))?;
    }
    Ok(())
}

fn csv_row(row: &SweepRow) -> String {
    format!(
        "{},{},{},{:.2},{},{:.3},{}",
        row.window,
        row.trials,
        row.hmac_computations,
        row.mean_exposure,
        row.max_exposure,
        row.detection_rate,
        row.elapsed_ms
    )
}
