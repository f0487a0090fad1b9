//! Runs a federation described by a plan file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedrf_core::coordinator::{run_federation, FederationPlan, RunOptions, TcpTransport};
use fedrf_core::wire::encode_forest;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(version, about = "Coordinate federated random forest training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train, aggregate and evaluate as the plan describes. Prints one JSON
    /// record per round and a final metrics record.
    Run {
        #[arg(long)]
        plan: PathBuf,
        /// Where to write the final serialized forest.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concatenate silo forests instead of sampling them.
        #[arg(long)]
        concat: bool,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let Command::Run { plan, out, concat } = Cli::parse().command;
    let plan = match FederationPlan::load(&plan) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{}: {e}", plan.display());
            return ExitCode::from(2);
        }
    };
    let outcome = run_federation(&plan, &TcpTransport, RunOptions { concat }, &mut |report| {
        let mut v = serde_json::to_value(report).expect("reports serialize");
        v["event"] = json!("round");
        println!("{v}");
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            println!("{}", json!({ "event": "failed", "error": e.to_string() }));
            eprintln!("federation failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!(
        "{}",
        json!({ "event": "metrics", "trees": outcome.forest.len(), "metrics": outcome.metrics })
    );
    if let Some(out) = out {
        if let Err(e) = std::fs::write(&out, encode_forest(&outcome.forest)) {
            eprintln!("cannot write {}: {e}", out.display());
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}
