use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedqueue::cli::{self, CommonArgs};

#[derive(Parser)]
#[command(name = "fedqueue", version, about = "Queue-aware federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $FEDQUEUE_OUTPUT_ROOT/<name>, root `runs`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite a nonempty output directory.
    #[arg(long)]
    force: bool,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep one config key over a list of values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Baseline FedQueue against its three single-mechanism ablations.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        trials: usize,
    },
    /// Staleness bound verification grid.
    CheckLemma1 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        trials: usize,
    },
}

fn args(c: Common, trials: usize) -> CommonArgs {
    CommonArgs { config: c.config, out: c.out, seed: c.seed, force: c.force, trials, jobs: c.jobs }
}

fn groups_text(groups: &[cli::GroupSummary]) -> String {
    let mut out = String::new();
    for g in groups {
        let t = g.median_time_to_target.map_or("not reached".to_string(), |t| format!("{t:.2}s"));
        let a = g.median_final_accuracy.map_or("-".to_string(), |a| format!("{a:.4}"));
        let _ = writeln!(out, "{:<22} time-to-target {t:<12} final accuracy {a:<8} P_late {:.3}", g.label, g.p_late);
    }
    out
}

fn main() -> ExitCode {
    let res = match Cli::parse().command {
        Command::Run { common } => cli::cmd_run(&args(common, 1)).map(|dir| format!("wrote {}\n", dir.display())),
        Command::Sweep { common, axis, values, trials } => cli::cmd_sweep(&args(common, trials), &axis, &values)
            .map(|(dir, groups)| format!("{}wrote {}\n", groups_text(&groups), dir.display())),
        Command::Ablate { common, trials } => cli::cmd_ablate(&args(common, trials))
            .map(|(dir, groups)| format!("{}wrote {}\n", groups_text(&groups), dir.display())),
        Command::CheckLemma1 { common, trials } => cli::cmd_check_lemma1(&args(common, trials))
            .map(|(dir, table)| format!("{table}wrote {}\n", dir.display())),
    };
    match res {
        Ok(text) => {
            // A closed pipe (e.g. `| head`) is not an error for the run itself.
            let _ = std::io::stdout().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
