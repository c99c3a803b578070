use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use super::log::MetricsLog;
use super::stats::{
    admission_summary, delay_statistics, local_steps_until, prediction_error_stats, time_to_target,
    transfers_until, AdmissionRow, DelayStatistics, ErrorStats, Target,
};
use crate::config::{ExperimentConfig, TransferCounting};
use crate::error::Result;

pub const SUMMARY_FILE: &str = "summary.json";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const EVENTS_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetOutcome {
    pub time: Option<f64>,
    pub transfers: Option<u64>,
    pub local_steps: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub algorithm: String,
    pub seed: u64,
    pub rounds: usize,
    pub skipped_rounds: usize,
    pub final_loss: f64,
    pub final_accuracy: Option<f64>,
    pub max_accuracy: Option<f64>,
    pub time_to_target: BTreeMap<String, TargetOutcome>,
    pub transfers: u64,
    pub total_local_steps: u64,
    pub admission: Vec<AdmissionRow>,
    pub max_delay_ratio: Option<f64>,
    pub delay: DelayStatistics,
    pub prediction_error: Vec<Option<ErrorStats>>,
    pub tau_max: u64,
    pub tau_violations: usize,
    pub pending_deferred: usize,
    pub failed: Option<String>,
    pub checksum: String,
}

fn outcome(log: &MetricsLog, target: Target, counting: TransferCounting) -> TargetOutcome {
    let time = time_to_target(log, target);
    TargetOutcome {
        time,
        transfers: time.map(|t| transfers_until(log, t, counting)),
        local_steps: time.map(|t| local_steps_until(log, t)),
    }
}

pub fn summarize(log: &MetricsLog, config: &ExperimentConfig) -> Summary {
    let counting = config.metrics.transfer_counting;
    let mut targets = BTreeMap::new();
    if log.initial_accuracy.is_some() {
        let a = config.metrics.target_accuracy;
        targets.insert(format!("accuracy>={a}"), outcome(log, Target::Accuracy(a), counting));
    }
    if config.metrics.target_loss > 0.0 {
        let l = config.metrics.target_loss;
        targets.insert(format!("loss<={l}"), outcome(log, Target::Loss(l), counting));
    }
    let tau_max = (1.0 + log.gamma).ceil() as u64;
    let delay = delay_statistics(log);
    Summary {
        algorithm: log.algorithm.clone(),
        seed: log.seed,
        rounds: log.rounds.len(),
        skipped_rounds: log.rounds.iter().filter(|r| r.skipped).count(),
        final_loss: log.final_loss(),
        final_accuracy: log.final_accuracy(),
        max_accuracy: log.max_accuracy(),
        time_to_target: targets,
        transfers: transfers_until(log, f64::INFINITY, counting),
        total_local_steps: log.total_local_steps(),
        admission: admission_summary(log),
        max_delay_ratio: delay.max_ratio,
        delay,
        prediction_error: prediction_error_stats(log, config.metrics.outlier_sigma),
        tau_max,
        tau_violations: log.rounds.iter().flat_map(|r| &r.admitted).filter(|u| u.tau > tau_max).count(),
        pending_deferred: log.pending_deferred,
        failed: log.failed.clone(),
        checksum: format!("{:016x}", log.checksum()),
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header of `rounds.csv` for `k` clients.
pub fn rounds_header(k: usize) -> String {
    let mut h = String::from("round,time,loss,accuracy,admitted,deferred,mean_tau,max_tau");
    for name in ["q", "q_hat", "E", "eta", "steps"] {
        for i in 0..k {
            let _ = write!(h, ",{name}_{i}");
        }
    }
    h
}

pub fn rounds_csv(log: &MetricsLog) -> String {
    let k = log.num_clients;
    let mut out = rounds_header(k);
    out.push('\n');
    for r in &log.rounds {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.round,
            r.time,
            r.loss,
            opt(r.accuracy),
            r.admitted.len(),
            r.deferred,
            opt(r.mean_tau()),
            opt(r.max_tau())
        );
        let cell = |i: usize| r.clients.get(i).cloned().unwrap_or_default();
        for i in 0..k {
            let _ = write!(out, ",{}", opt(cell(i).q));
        }
        for i in 0..k {
            let _ = write!(out, ",{}", opt(cell(i).q_hat));
        }
        for i in 0..k {
            let _ = write!(out, ",{}", opt(cell(i).budget_steps));
        }
        for i in 0..k {
            let _ = write!(out, ",{}", opt(cell(i).eta));
        }
        for i in 0..k {
            let _ = write!(out, ",{}", opt(cell(i).steps));
        }
        out.push('\n');
    }
    out
}

pub fn events_jsonl(log: &MetricsLog) -> Result<String> {
    let mut out = String::new();
    for e in &log.events {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes the three run artifacts into `dir`, which must exist.
pub fn write_outputs(log: &MetricsLog, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let summary = summarize(log, config);
    let mut f = fs::File::create(dir.join(SUMMARY_FILE))?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    f.write_all(b"\n")?;
    fs::write(dir.join(ROUNDS_FILE), rounds_csv(log))?;
    let events = if config.metrics.write_events { events_jsonl(log)? } else { String::new() };
    fs::write(dir.join(EVENTS_FILE), events)?;
    Ok(())
}
