//! Experiment sweeps and silo partitioning.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedrf_core::harness::{
    partition_rows, run_experiment, train_silo_id, ExperimentConfig, FederationMode, EVAL_SILO,
};
use fedrf_core::CsvTable;

#[derive(Parser, Debug)]
#[command(version, about = "Federated random forest experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep silo counts and seeds; write runs.jsonl, summary.csv,
    /// summary.txt and accuracy_vs_silos.csv to the config's out_dir.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Datasite executable for multi_process mode. Defaults to the one
        /// next to this binary.
        #[arg(long)]
        datasite_bin: Option<PathBuf>,
    },
    /// Split a CSV into test.csv and silo-<i>.csv files.
    Partition {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        silos: usize,
        #[arg(long, default_value_t = 0.2)]
        test: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Label column; enables the two-classes-per-silo check.
        #[arg(long)]
        target: Option<String>,
        /// Keep the class mix in every silo. Requires --target.
        #[arg(long)]
        stratify: bool,
    },
}

fn sibling_datasite() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let p = exe.with_file_name(format!("datasite{}", std::env::consts::EXE_SUFFIX));
    p.exists().then_some(p)
}

fn run(config: &Path, datasite_bin: Option<PathBuf>) -> Result<(), String> {
    let config = ExperimentConfig::load(config).map_err(|e| e.to_string())?;
    let bin = datasite_bin.or_else(sibling_datasite);
    if config.mode == FederationMode::MultiProcess && bin.is_none() {
        return Err("multi_process mode: datasite binary not found, pass --datasite-bin".into());
    }
    let report = run_experiment(&config, bin.as_deref()).map_err(|e| e.to_string())?;
    print!(
        "{}",
        fedrf_core::harness::experiment::summary_text(&report.summary)
    );
    println!("results in {}", config.out_dir.display());
    Ok(())
}

fn labels_of(table: &CsvTable, target: &str) -> Result<Vec<u32>, String> {
    let col = table
        .column(target)
        .ok_or_else(|| format!("no column {target:?}"))?;
    let mut ids = HashMap::new();
    Ok(table
        .rows
        .iter()
        .map(|r| {
            let next = ids.len() as u32;
            *ids.entry(r[col].clone()).or_insert(next)
        })
        .collect())
}

fn partition(
    data: &Path,
    silos: usize,
    test: f64,
    seed: u64,
    out: &Path,
    target: Option<&str>,
    stratify: bool,
) -> Result<(), String> {
    let table = CsvTable::read(data).map_err(|e| e.to_string())?;
    let labels = target.map(|t| labels_of(&table, t)).transpose()?;
    let split = partition_rows(
        table.rows.len(),
        labels.as_deref(),
        silos,
        test,
        seed,
        stratify,
    )
    .map_err(|e| e.to_string())?;
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let mut files = vec![(EVAL_SILO.to_string(), &split.test)];
    files.extend(
        split
            .parts
            .iter()
            .enumerate()
            .map(|(i, p)| (train_silo_id(i), p)),
    );
    for (name, rows) in files {
        let path = out.join(format!("{name}.csv"));
        table.select(rows).write(&path).map_err(|e| e.to_string())?;
        println!("{}\t{} rows", path.display(), rows.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = match Cli::parse().command {
        Command::Run {
            config,
            datasite_bin,
        } => run(&config, datasite_bin),
        Command::Partition {
            data,
            silos,
            test,
            seed,
            out,
            target,
            stratify,
        } => partition(&data, silos, test, seed, &out, target.as_deref(), stratify),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
