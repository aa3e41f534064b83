use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use symloss_cli::commands::{self, Options};
use symloss_cli::config::DATA_DIR_ENV;
use symloss_cli::{exit, CliError};

#[derive(Parser)]
#[command(name = "symloss", version, about = "Noisy-label loss experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write run.json, epochs.csv and final_report.csv.
    Train(Common),
    /// Run every grid cell and write sweep.csv plus per-cell artifacts.
    Sweep(Common),
    /// Check the symmetric-noise risk identity and minimizer preservation.
    VerifyTheorem(Common),
    /// Compare analytic and finite-difference loss gradients.
    GradCheck(Common),
}

#[derive(Args)]
struct Common {
    /// `key = value` experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Default MNIST directory when the config names none.
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
}

impl From<Common> for Options {
    fn from(c: Common) -> Self {
        Options {
            config: c.config,
            out: c.out,
            seed: c.seed,
            jobs: c.jobs,
            data_dir: c.data_dir,
        }
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Train(c) => {
            let s = commands::cmd_train(&c.into())?;
            println!(
                "{} eta={} seed={}: last_acc={} best_acc={} spread={} realized_noise={}",
                s.loss,
                s.eta,
                s.seed,
                fmt(s.last_acc),
                fmt(s.best_acc),
                fmt(s.class_acc_spread),
                fmt(s.realized_noise)
            );
            Ok(exit::OK)
        }
        Command::Sweep(c) => {
            let rows = commands::cmd_sweep(&c.into())?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!("{} cells, {failed} failed", rows.len());
            for r in rows.iter().filter(|r| r.status != "ok") {
                eprintln!("{} eta={} seed={}: {}", r.loss, r.eta, r.seed, r.status);
            }
            Ok(exit::OK)
        }
        Command::VerifyTheorem(c) => {
            let report = commands::cmd_verify_theorem(&c.into())?;
            let worst = report.identity.iter().map(|r| r.max_residual).fold(0.0, f64::max);
            println!("identity: {} settings, max residual {worst:e}", report.identity.len());
            for m in &report.minimizers {
                println!("minimizers {} eta={}: {}", m.model, m.eta, m.status);
            }
            println!("{}", if report.pass { "PASS" } else { "FAIL" });
            Ok(if report.pass { exit::OK } else { exit::CHECK_FAILED })
        }
        Command::GradCheck(c) => {
            let rows = commands::cmd_grad_check(&c.into())?;
            for r in &rows {
                println!("{:<32} K={:<3} max_rel_err={:e}", r.loss, r.classes, r.max_rel_err);
            }
            let ok = commands::grad_check_passed(&rows);
            println!("{}", if ok { "PASS" } else { "FAIL" });
            Ok(if ok { exit::OK } else { exit::CHECK_FAILED })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("symloss: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
