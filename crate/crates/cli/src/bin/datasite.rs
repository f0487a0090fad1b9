//! Datasite service and its admin client.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use fedrf_core::datasite::server::{admin_request, serve, RequestHook};
use fedrf_core::datasite::{ApprovalPolicy, Datasite, OwnerSettings};
use fedrf_core::events::EventLog;
use fedrf_core::wire::Message;
use fedrf_core::CsvTable;
use serde_json::json;

const DEFAULT_ADMIN: &str = "127.0.0.1:7700";

#[derive(Parser, Debug)]
#[command(version, about = "Serve one private CSV to a federation coordinator")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Address for the protocol port.
    #[arg(long)]
    listen: Option<String>,
    /// Local CSV file with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Target column; coordinator data params must agree.
    #[arg(long)]
    target: Option<String>,
    /// Comma-separated columns excluded from the features.
    #[arg(long, value_delimiter = ',')]
    ignore: Option<Vec<String>>,
    /// Positive class label; coordinator data params must agree.
    #[arg(long)]
    positive_label: Option<String>,
    /// `auto` executes requests at once; `manual` parks them for approval.
    #[arg(long, default_value = "auto")]
    approval: ApprovalPolicy,
    /// Admin port. Defaults to 127.0.0.1:7700 in manual mode.
    #[arg(long)]
    admin: Option<SocketAddr>,
    /// Name reported in HELLO.
    #[arg(long, default_value = "datasite")]
    name: String,
    /// Exit with status 3 on receiving a train request for this round or
    /// later, before replying. For fault-injection tests.
    #[arg(long, hide = true)]
    fail_at_round: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Approve a pending request.
    Approve {
        id: u64,
        #[arg(long, default_value = DEFAULT_ADMIN)]
        admin: String,
    },
    /// Reject a pending request.
    Reject {
        id: u64,
        #[arg(long, default_value = DEFAULT_ADMIN)]
        admin: String,
    },
    /// List pending requests as JSON.
    Pending {
        #[arg(long, default_value = DEFAULT_ADMIN)]
        admin: String,
    },
}

fn admin(addr: &str, line: &str) -> ExitCode {
    match admin_request(addr, line) {
        Ok(answer) => {
            println!("{answer}");
            if answer.starts_with("ERR") {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("cannot reach admin port {addr}: {e}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match &cli.command {
        Some(Command::Approve { id, admin: a }) => return admin(a, &format!("APPROVE {id}")),
        Some(Command::Reject { id, admin: a }) => return admin(a, &format!("REJECT {id}")),
        Some(Command::Pending { admin: a }) => return admin(a, "PENDING"),
        None => {}
    }
    let (Some(listen), Some(data)) = (&cli.listen, &cli.data) else {
        eprintln!("--listen and --data are required to serve");
        return ExitCode::from(2);
    };
    let table = match CsvTable::read(data) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", data.display());
            return ExitCode::FAILURE;
        }
    };
    let log = EventLog::stdout();
    let site = Datasite::new(cli.name.clone(), table, cli.approval)
        .with_owner_settings(OwnerSettings {
            target_column: cli.target.clone(),
            ignored_columns: cli.ignore.clone(),
            positive_label: cli.positive_label.clone(),
        })
        .with_log(log.clone());
    let admin_addr = cli.admin.or_else(|| {
        (cli.approval == ApprovalPolicy::Manual).then(|| DEFAULT_ADMIN.parse().unwrap())
    });
    let hook: Option<RequestHook> = cli.fail_at_round.map(|round| {
        let log = log.clone();
        Arc::new(move |m: &Message| {
            if let Message::TrainRequest(t) = m {
                if t.round_index >= round {
                    log.emit("injected_failure", json!({ "round": t.round_index }));
                    std::process::exit(3);
                }
            }
        }) as RequestHook
    });
    let server = match serve(Arc::new(site), listen.as_str(), admin_addr, hook) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot listen: {e}");
            return ExitCode::FAILURE;
        }
    };
    log.emit(
        "listening",
        json!({
            "addr": server.addr().to_string(),
            "admin": server.admin_addr().map(|a| a.to_string()),
            "approval": cli.approval,
        }),
    );
    server.wait();
    ExitCode::SUCCESS
}
