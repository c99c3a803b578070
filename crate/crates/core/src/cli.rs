//! Subcommand implementations behind the `fedqueue` binary. Each command
//! writes plain files (JSON, CSV, JSONL) for offline analysis.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{Algorithm, DatasetKind, ExperimentConfig};
use crate::engine::{run_experiment, run_sweep, trial_seed, SweepPoint};
use crate::error::{Error, Result};
use crate::metrics::{
    delay_statistics, delay_statistics_from_ratios, delta_threshold, lemma1_monte_carlo, median, median_time,
    time_to_target, write_outputs, MetricsLog, Target, TheoryParams,
};

/// Environment variable naming the directory default output paths go under.
pub const OUTPUT_ROOT_ENV: &str = "FEDQUEUE_OUTPUT_ROOT";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const LEMMA1_FILE: &str = "lemma1.csv";

#[derive(Debug, Clone, Default)]
pub struct CommonArgs {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub force: bool,
    pub trials: usize,
    pub jobs: usize,
}

pub fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.protocol.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `--out` if given, else `$FEDQUEUE_OUTPUT_ROOT/<name>` (root defaults to
/// `runs`).
pub fn output_dir(out: Option<&Path>, name: &str) -> PathBuf {
    match out {
        Some(p) => p.to_path_buf(),
        None => {
            let root = std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
            root.join(name)
        }
    }
}

/// Makes `dir` an empty directory. A nonempty existing directory is only
/// cleared with `force`.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let nonempty = fs::read_dir(dir)?.next().is_some();
        if nonempty {
            if !force {
                return Err(Error::Output(format!(
                    "{} already exists and is not empty; pass --force to overwrite",
                    dir.display()
                )));
            }
            fs::remove_dir_all(dir)?;
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Runs `body` against a freshly prepared `dir`, removing the directory if
/// `body` fails so no partial outputs remain.
fn with_output_dir<T>(dir: &Path, force: bool, body: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    prepare_dir(dir, force)?;
    body(dir).inspect_err(|_| {
        let _ = fs::remove_dir_all(dir);
    })
}

/// Target used for time-to-target comparisons: accuracy for classification,
/// loss for the quadratic task.
pub fn primary_target(cfg: &ExperimentConfig) -> Target {
    match cfg.workload.dataset {
        DatasetKind::Synthetic => Target::Accuracy(cfg.metrics.target_accuracy),
        DatasetKind::Quadratic => Target::Loss(cfg.metrics.target_loss),
    }
}

fn default_run_name(cfg: &ExperimentConfig) -> String {
    format!("{}_seed{}", cfg.protocol.algorithm.as_str(), cfg.protocol.seed)
}

pub fn cmd_run(args: &CommonArgs) -> Result<PathBuf> {
    let cfg = load_config(args)?;
    let dir = output_dir(args.out.as_deref(), &default_run_name(&cfg));
    with_output_dir(&dir, args.force, |d| {
        let log = run_experiment(&cfg)?;
        write_outputs(&log, &cfg, d)?;
        cfg.save(&d.join("config.ini"))?;
        if let Some(msg) = &log.failed {
            return Err(Error::Numerical(msg.clone()));
        }
        Ok(())
    })?;
    Ok(dir)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn point_row(axis_value: &str, p: &SweepPoint) -> String {
    let log = &p.log;
    let d = delay_statistics(log);
    let ttt = time_to_target(log, primary_target(&p.config));
    format!(
        "{},{},{},{},{:.6},{},{},{},{:.6},{},{},{},{},{}",
        axis_value,
        p.trial,
        log.seed,
        log.algorithm,
        log.final_loss(),
        fmt_opt(log.final_accuracy()),
        fmt_opt(log.max_accuracy()),
        fmt_opt(ttt),
        d.p_late,
        fmt_opt(d.expected_late_ratio),
        fmt_opt(d.max_ratio),
        log.dispatches.len(),
        log.total_local_steps(),
        log.failed.as_deref().unwrap_or("")
    )
}

const POINT_HEADER: &str = "trial,seed,algorithm,final_loss,final_accuracy,max_accuracy,time_to_target,p_late,expected_late_ratio,max_delay_ratio,dispatches,local_steps,failed";

/// Per-group medians over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub label: String,
    pub trials: usize,
    pub median_time_to_target: Option<f64>,
    pub median_final_accuracy: Option<f64>,
    pub median_final_loss: Option<f64>,
    pub p_late: f64,
}

/// Median time-to-target, final accuracy and loss over `logs`, plus the
/// pooled late-arrival fraction.
pub fn summarize_group(label: &str, logs: &[&MetricsLog], target: Target) -> GroupSummary {
    let times: Vec<Option<f64>> = logs.iter().map(|l| time_to_target(l, target)).collect();
    let accs: Vec<f64> = logs.iter().filter_map(|l| l.final_accuracy()).collect();
    let losses: Vec<f64> = logs.iter().map(|l| l.final_loss()).collect();
    let ratios: Vec<f64> = logs
        .iter()
        .flat_map(|l| l.arrivals.iter().map(|a| a.delay_ratio(l.t_sync)))
        .collect();
    GroupSummary {
        label: label.to_string(),
        trials: logs.len(),
        median_time_to_target: median_time(&times),
        median_final_accuracy: median(&accs),
        median_final_loss: median(&losses),
        p_late: delay_statistics_from_ratios(&ratios).p_late,
    }
}

fn group_rows(groups: &[GroupSummary], first_col: &str) -> String {
    let mut out = format!("{first_col},trials,median_time_to_target,median_final_accuracy,median_final_loss,p_late\n");
    for g in groups {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6}",
            g.label,
            g.trials,
            fmt_opt(g.median_time_to_target),
            fmt_opt(g.median_final_accuracy),
            fmt_opt(g.median_final_loss),
            g.p_late
        );
    }
    out
}

fn write_points(dir: &Path, axis: &str, points: &[SweepPoint]) -> Result<String> {
    let mut csv = format!("{axis},{POINT_HEADER}\n");
    for p in points {
        let sub = dir.join(format!("{axis}={}", p.value)).join(format!("trial{}", p.trial));
        fs::create_dir_all(&sub)?;
        write_outputs(&p.log, &p.config, &sub)?;
        csv.push_str(&point_row(&p.value, p));
        csv.push('\n');
    }
    Ok(csv)
}

fn groups_by_value(values: &[String], points: &[SweepPoint]) -> Vec<GroupSummary> {
    values
        .iter()
        .map(|v| {
            let logs: Vec<&MetricsLog> = points.iter().filter(|p| &p.value == v).map(|p| &p.log).collect();
            let target = points
                .iter()
                .find(|p| &p.value == v)
                .map_or(Target::Accuracy(1.0), |p| primary_target(&p.config));
            summarize_group(v, &logs, target)
        })
        .collect()
}

pub fn cmd_sweep(args: &CommonArgs, axis: &str, values: &[String]) -> Result<(PathBuf, Vec<GroupSummary>)> {
    if values.is_empty() {
        return Err(Error::Input("--values needs at least one value".into()));
    }
    let cfg = load_config(args)?;
    let dir = output_dir(args.out.as_deref(), &format!("sweep_{axis}"));
    let groups = with_output_dir(&dir, args.force, |d| {
        let points = run_sweep(&cfg, axis, values, args.trials.max(1), args.jobs)?;
        let csv = write_points(d, axis, &points)?;
        fs::write(d.join(SWEEP_FILE), csv)?;
        let groups = groups_by_value(values, &points);
        fs::write(d.join(SWEEP_SUMMARY_FILE), group_rows(&groups, axis))?;
        Ok(groups)
    })?;
    Ok((dir, groups))
}

/// The four ablation variants in report order.
pub const ABLATION_VARIANTS: [&str; 4] = ["baseline", "w/o inverse LR", "w/o EWMA", "w/o staleness decay"];

pub fn ablation_config(base: &ExperimentConfig, variant: &str) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match variant {
        "baseline" => {}
        "w/o inverse LR" => cfg.ablation.use_inverse_lr = false,
        "w/o EWMA" => cfg.ablation.use_ewma = false,
        "w/o staleness decay" => cfg.ablation.use_staleness_decay = false,
        other => return Err(Error::Input(format!("unknown ablation variant `{other}`"))),
    }
    Ok(cfg)
}

/// Runs every ablation variant of FedQueue on the same seed set.
pub fn run_ablation(base: &ExperimentConfig, trials: usize, jobs: usize) -> Result<Vec<(String, Vec<SweepPoint>)>> {
    let mut base = base.clone();
    base.protocol.algorithm = Algorithm::FedQueue;
    let mut out = Vec::new();
    for v in ABLATION_VARIANTS {
        let cfg = ablation_config(&base, v)?;
        // A sweep over the seed key keeps the seed set identical per variant.
        let seeds: Vec<String> = (0..trials.max(1)).map(|t| trial_seed(base.protocol.seed, t).to_string()).collect();
        let mut points = run_sweep(&cfg, "seed", &seeds, 1, jobs)?;
        for (t, p) in points.iter_mut().enumerate() {
            p.trial = t;
        }
        out.push((v.to_string(), points));
    }
    Ok(out)
}

pub fn cmd_ablate(args: &CommonArgs) -> Result<(PathBuf, Vec<GroupSummary>)> {
    let cfg = load_config(args)?;
    let dir = output_dir(args.out.as_deref(), "ablation");
    let groups = with_output_dir(&dir, args.force, |d| {
        let runs = run_ablation(&cfg, args.trials.max(1), args.jobs)?;
        let target = primary_target(&cfg);
        let mut groups = Vec::new();
        let mut csv = format!("variant,{POINT_HEADER}\n");
        for (variant, points) in &runs {
            let slug = variant.replace("w/o ", "no_").replace(' ', "_");
            for p in points {
                let sub = d.join(&slug).join(format!("trial{}", p.trial));
                fs::create_dir_all(&sub)?;
                write_outputs(&p.log, &p.config, &sub)?;
                csv.push_str(&point_row(variant, p));
                csv.push('\n');
            }
            let logs: Vec<&MetricsLog> = points.iter().map(|p| &p.log).collect();
            groups.push(summarize_group(variant, &logs, target));
        }
        fs::write(d.join("ablation_runs.csv"), csv)?;
        fs::write(d.join(ABLATION_FILE), group_rows(&groups, "variant"))?;
        Ok(groups)
    })?;
    Ok((dir, groups))
}

/// One row of the bound verification grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Row {
    pub rho: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub p_late: f64,
    pub expected_late_ratio: Option<f64>,
    pub max_late_ratio: Option<f64>,
    pub median_time_to_target: Option<f64>,
    /// Smallest safety buffer the high-probability bound asks for.
    pub delta_star: f64,
    /// Monte Carlo probability that any staleness exceeds `tau_max` when
    /// the buffer is `delta_star`.
    pub bound_violation: f64,
}

/// Representative `(rho, gamma, alpha)` grid: a rho sweep, a gamma sweep and
/// an EWMA-rate sweep around `(0.1, 4, 0.5)`.
pub fn lemma1_grid() -> Vec<(f64, f64, f64)> {
    let mut g = Vec::new();
    for rho in [0.1, 0.5, 0.9] {
        g.push((rho, 4.0, 0.5));
    }
    for gamma in [1.0, 2.0, 4.0] {
        g.push((0.1, gamma, 0.5));
    }
    for alpha in [0.1, 0.5, 1.0] {
        g.push((0.1, 4.0, alpha));
    }
    g
}

pub const LEMMA1_EPSILON: f64 = 0.05;
pub const LEMMA1_MC_TRIALS: usize = 10_000;

/// Simulates FedQueue at each grid point over `trials` seeds and pairs the
/// observed lateness with the analytical buffer and its Monte Carlo check.
pub fn check_lemma1(
    base: &ExperimentConfig,
    grid: &[(f64, f64, f64)],
    trials: usize,
    jobs: usize,
) -> Result<Vec<Lemma1Row>> {
    let mut base = base.clone();
    base.protocol.algorithm = Algorithm::FedQueue;
    let k = base.protocol.num_clients;
    let rounds = base.protocol.num_rounds as usize;
    let t_sync = base.fedqueue.t_sync;
    let target = primary_target(&base);
    let mut rows = Vec::with_capacity(grid.len());
    for &(rho, gamma, alpha) in grid {
        let mut cfg = base.clone();
        cfg.fedqueue.queue_rho = rho;
        cfg.fedqueue.gamma = gamma;
        cfg.fedqueue.alpha = alpha;
        let points = run_sweep(&cfg, "seed", &[cfg.protocol.seed.to_string()], trials.max(1), jobs)?;
        let logs: Vec<&MetricsLog> = points.iter().map(|p| &p.log).collect();
        let ratios: Vec<f64> = logs
            .iter()
            .flat_map(|l| l.arrivals.iter().map(|a| a.delay_ratio(l.t_sync)))
            .collect();
        let d = delay_statistics_from_ratios(&ratios);
        let times: Vec<Option<f64>> = logs.iter().map(|l| time_to_target(l, target)).collect();
        let params = TheoryParams::uniform(rho, k, LEMMA1_EPSILON, gamma);
        let delta_star = delta_threshold(&params, t_sync, k, rounds)?;
        let bound_violation =
            lemma1_monte_carlo(&params, t_sync, delta_star, k, rounds, LEMMA1_MC_TRIALS, base.protocol.seed)?;
        let late = d.p_late > 0.0;
        rows.push(Lemma1Row {
            rho,
            gamma,
            alpha,
            p_late: d.p_late,
            expected_late_ratio: d.expected_late_ratio,
            max_late_ratio: if late { d.max_ratio } else { None },
            median_time_to_target: median_time(&times),
            delta_star,
            bound_violation,
        });
    }
    Ok(rows)
}

fn dash(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

pub fn lemma1_table(rows: &[Lemma1Row]) -> String {
    let mut s = format!(
        "{:>5} {:>6} {:>6} {:>7} {:>7} {:>7} {:>10} {:>8} {:>9}\n",
        "rho", "gamma", "alpha", "P", "E_d", "R_d", "time(s)", "delta*", "viol"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>5} {:>6} {:>6} {:>7.3} {:>7} {:>7} {:>10} {:>8.3} {:>9.4}",
            r.rho,
            r.gamma,
            r.alpha,
            r.p_late,
            dash(r.expected_late_ratio, 2),
            dash(r.max_late_ratio, 2),
            dash(r.median_time_to_target, 2),
            r.delta_star,
            r.bound_violation
        );
    }
    s
}

fn lemma1_csv(rows: &[Lemma1Row]) -> String {
    let mut s = String::from("rho,gamma,alpha,p_late,expected_late_ratio,max_late_ratio,median_time_to_target,delta_star,bound_violation\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{},{},{},{:.6},{:.6}",
            r.rho,
            r.gamma,
            r.alpha,
            r.p_late,
            fmt_opt(r.expected_late_ratio),
            fmt_opt(r.max_late_ratio),
            fmt_opt(r.median_time_to_target),
            r.delta_star,
            r.bound_violation
        );
    }
    s
}

pub fn cmd_check_lemma1(args: &CommonArgs) -> Result<(PathBuf, String)> {
    let cfg = load_config(args)?;
    let dir = output_dir(args.out.as_deref(), "lemma1");
    let table = with_output_dir(&dir, args.force, |d| {
        let rows = check_lemma1(&cfg, &lemma1_grid(), args.trials.max(1), args.jobs)?;
        fs::write(d.join(LEMMA1_FILE), lemma1_csv(&rows))?;
        Ok(lemma1_table(&rows))
    })?;
    Ok((dir, table))
}
