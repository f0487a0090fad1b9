//! Local federations: every silo in this process, or one datasite process
//! per silo on loopback.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::aggregation::AggregationStrategy;
use crate::coordinator::{
    run_federation, FederationOutcome, FederationPlan, InProcessTransport, RunOptions, SiloRole,
    SiloSpec, TcpTransport, Transport, WeightFillMode,
};
use crate::dataset::CsvTable;
use crate::datasite::{ApprovalPolicy, Datasite};
use crate::params::{DataParams, ModelParams};

pub const EVAL_SILO: &str = "test";

/// Id of train silo `i` (0-based).
pub fn train_silo_id(i: usize) -> String {
    format!("silo-{}", i + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FederationMode {
    #[default]
    InProcess,
    MultiProcess,
}

/// Raw CSV tables for the evaluation silo and each train silo.
#[derive(Debug, Clone, PartialEq)]
pub struct SiloTables {
    pub test: CsvTable,
    pub train: Vec<CsvTable>,
}

/// What a local federation trains.
#[derive(Debug, Clone, PartialEq)]
pub struct FederationSetup {
    pub model_params: ModelParams,
    pub data_params: DataParams,
    pub strategy: AggregationStrategy,
    pub timeout_secs: Option<f64>,
}

impl FederationSetup {
    /// A plan over `train` addresses plus the evaluation silo.
    pub fn plan(&self, train: &[String], eval: &str) -> FederationPlan {
        let mut silos: Vec<SiloSpec> = train
            .iter()
            .enumerate()
            .map(|(i, address)| SiloSpec {
                id: train_silo_id(i),
                address: address.clone(),
                weight: None,
                role: SiloRole::Train,
            })
            .collect();
        silos.push(SiloSpec {
            id: EVAL_SILO.into(),
            address: eval.into(),
            weight: None,
            role: SiloRole::Eval,
        });
        FederationPlan {
            silos,
            model_params: self.model_params.clone(),
            data_params: self.data_params.clone(),
            strategy: self.strategy,
            weight_fill: WeightFillMode::Equal,
            timeout_secs: self.timeout_secs,
        }
    }
}

fn run(
    plan: &FederationPlan,
    transport: &dyn Transport,
) -> Result<FederationOutcome, HarnessError> {
    Ok(run_federation(
        plan,
        transport,
        RunOptions::default(),
        &mut |_| {},
    )?)
}

/// Runs the federation with every datasite in this process.
pub fn run_in_process(
    tables: &SiloTables,
    setup: &FederationSetup,
) -> Result<FederationOutcome, HarnessError> {
    let site = |name: &str, t: &CsvTable| {
        Arc::new(Datasite::new(name, t.clone(), ApprovalPolicy::AutoApprove))
    };
    let mut transport = InProcessTransport::new().with(EVAL_SILO, site(EVAL_SILO, &tables.test));
    for (i, t) in tables.train.iter().enumerate() {
        let id = train_silo_id(i);
        transport.insert(id.clone(), site(&id, t));
    }
    let names: Vec<String> = (0..tables.train.len()).map(train_silo_id).collect();
    run(&setup.plan(&names, EVAL_SILO), &transport)
}

/// A running datasite child process.
#[derive(Debug)]
pub struct DatasiteProcess {
    pub silo: String,
    pub addr: SocketAddr,
    pub log_path: PathBuf,
    child: Child,
}

impl DatasiteProcess {
    pub fn pid(&self) -> u32 {
        self.child.id()
    }

    /// `Some(exit code)` once the process has exited.
    pub fn exited(&mut self) -> Option<Option<i32>> {
        self.child.try_wait().ok().flatten().map(|s| s.code())
    }

    pub fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn read_logs(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_default()
}

/// Starts `bin --listen 127.0.0.1:0 --data <csv> --approval auto <extra>`
/// and waits for its `listening` line.
pub fn spawn_datasite(
    bin: &Path,
    silo: &str,
    csv: &Path,
    log_dir: &Path,
    extra: &[String],
) -> Result<DatasiteProcess, HarnessError> {
    fs::create_dir_all(log_dir)?;
    let log_path = log_dir.join(format!("{silo}.log"));
    let stderr = File::create(log_dir.join(format!("{silo}.stderr")))?;
    let mut child = Command::new(bin)
        .arg("--listen")
        .arg("127.0.0.1:0")
        .arg("--data")
        .arg(csv)
        .arg("--approval")
        .arg("auto")
        .arg("--name")
        .arg(silo)
        .args(extra)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(stderr)
        .spawn()
        .map_err(|e| HarnessError::ChildProcessFailure {
            silo: silo.into(),
            logs: format!("cannot start {}: {e}", bin.display()),
        })?;

    let stdout = child.stdout.take().expect("stdout is piped");
    let mut log = File::create(&log_path)?;
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut first = true;
        for line in BufReader::new(stdout).lines() {
            let Ok(line) = line else { break };
            if first {
                let _ = tx.send(line.clone());
                first = false;
            }
            let _ = writeln!(log, "{line}");
        }
    });

    let failure = |child: &mut Child, why: String| {
        let _ = child.kill();
        let _ = child.wait();
        let logs = format!("{why}\n{}", read_logs(&log_path.with_extension("stderr")));
        HarnessError::ChildProcessFailure {
            silo: silo.into(),
            logs,
        }
    };
    let line = match rx.recv_timeout(Duration::from_secs(60)) {
        Ok(l) => l,
        Err(_) => return Err(failure(&mut child, "no listening line".into())),
    };
    let addr = serde_json::from_str::<serde_json::Value>(&line)
        .ok()
        .filter(|v| v["event"] == "listening")
        .and_then(|v| v["addr"].as_str().and_then(|a| a.parse().ok()));
    match addr {
        Some(addr) => Ok(DatasiteProcess {
            silo: silo.into(),
            addr,
            log_path,
            child,
        }),
        None => Err(failure(
            &mut child,
            format!("unexpected first line {line:?}"),
        )),
    }
}

/// One datasite process per silo, with CSVs written under `dir`.
#[derive(Debug)]
pub struct LocalCluster {
    pub eval: DatasiteProcess,
    pub train: Vec<DatasiteProcess>,
    pub dir: PathBuf,
}

impl LocalCluster {
    /// `extra[i]` holds additional arguments for train silo `i`.
    pub fn spawn(
        bin: &Path,
        dir: &Path,
        tables: &SiloTables,
        extra: &[Vec<String>],
    ) -> Result<Self, HarnessError> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{EVAL_SILO}.csv"));
        tables.test.write(&csv)?;
        let eval = spawn_datasite(bin, EVAL_SILO, &csv, dir, &[])?;
        let mut cluster = LocalCluster {
            eval,
            train: Vec::new(),
            dir: dir.to_path_buf(),
        };
        for (i, t) in tables.train.iter().enumerate() {
            let id = train_silo_id(i);
            let csv = dir.join(format!("{id}.csv"));
            t.write(&csv)?;
            let args = extra.get(i).cloned().unwrap_or_default();
            // Dropping `cluster` on error kills what already started.
            let p = spawn_datasite(bin, &id, &csv, dir, &args)?;
            cluster.train.push(p);
        }
        Ok(cluster)
    }

    pub fn plan(&self, setup: &FederationSetup) -> FederationPlan {
        let train: Vec<String> = self.train.iter().map(|p| p.addr.to_string()).collect();
        setup.plan(&train, &self.eval.addr.to_string())
    }

    pub fn addresses(&self) -> Vec<SocketAddr> {
        std::iter::once(self.eval.addr)
            .chain(self.train.iter().map(|p| p.addr))
            .collect()
    }

    fn kill_all(&mut self) {
        self.eval.kill();
        for p in &mut self.train {
            p.kill();
        }
    }

    /// Stops every process and checks that none of their ports still
    /// accepts connections.
    pub fn teardown(mut self) -> Result<(), HarnessError> {
        self.kill_all();
        let open: Vec<String> = self
            .addresses()
            .into_iter()
            .filter(|a| TcpStream::connect_timeout(a, Duration::from_millis(200)).is_ok())
            .map(|a| a.to_string())
            .collect();
        if open.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::LeakedPorts(open.join(", ")))
        }
    }
}

impl Drop for LocalCluster {
    fn drop(&mut self) {
        self.kill_all();
    }
}

/// Runs the federation against one datasite process per silo.
pub fn run_multi_process(
    bin: &Path,
    dir: &Path,
    tables: &SiloTables,
    setup: &FederationSetup,
) -> Result<FederationOutcome, HarnessError> {
    let cluster = LocalCluster::spawn(bin, dir, tables, &[])?;
    let outcome = run(&cluster.plan(setup), &TcpTransport);
    cluster.teardown()?;
    outcome
}
