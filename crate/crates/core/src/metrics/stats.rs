use serde::Serialize;

use super::log::MetricsLog;
use crate::config::TransferCounting;

/// Quality threshold for [`time_to_target`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// Reached when accuracy >= the level.
    Accuracy(f64),
    /// Reached when loss <= the level.
    Loss(f64),
}

/// First evaluation time at which the target holds, `None` if never.
pub fn time_to_target(log: &MetricsLog, target: Target) -> Option<f64> {
    log.rounds
        .iter()
        .find(|r| match target {
            Target::Accuracy(level) => r.accuracy.is_some_and(|a| a >= level),
            Target::Loss(level) => r.loss <= level,
        })
        .map(|r| r.time)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayStatistics {
    /// Fraction of arrivals later than one horizon after submission.
    pub p_late: f64,
    /// Mean normalized delay of the late arrivals; `None` when there are none.
    pub expected_late_ratio: Option<f64>,
    /// Largest normalized delay over all arrivals.
    pub max_ratio: Option<f64>,
    pub arrivals: usize,
}

/// Statistics over normalized delays `(a - submit) / T_sync`.
pub fn delay_statistics_from_ratios(ratios: &[f64]) -> DelayStatistics {
    let late: Vec<f64> = ratios.iter().copied().filter(|r| *r > 1.0).collect();
    DelayStatistics {
        p_late: if ratios.is_empty() { 0.0 } else { late.len() as f64 / ratios.len() as f64 },
        expected_late_ratio: if late.is_empty() {
            None
        } else {
            Some(late.iter().sum::<f64>() / late.len() as f64)
        },
        max_ratio: ratios.iter().copied().reduce(f64::max),
        arrivals: ratios.len(),
    }
}

pub fn delay_statistics(log: &MetricsLog) -> DelayStatistics {
    let ratios: Vec<f64> = log.arrivals.iter().map(|a| a.delay_ratio(log.t_sync)).collect();
    delay_statistics_from_ratios(&ratios)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissionRow {
    pub k: usize,
    pub submitted: usize,
    pub admitted: usize,
    pub deferred: usize,
    pub max_delay_ratio: Option<f64>,
}

/// Per-client counts over aggregated updates: `tau == 0` admitted in-round,
/// `tau >= 1` deferred.
pub fn admission_summary(log: &MetricsLog) -> Vec<AdmissionRow> {
    let mut rows: Vec<AdmissionRow> = (0..log.num_clients)
        .map(|k| AdmissionRow { k, submitted: 0, admitted: 0, deferred: 0, max_delay_ratio: None })
        .collect();
    for u in log.rounds.iter().flat_map(|r| &r.admitted) {
        let row = &mut rows[u.k];
        if u.tau == 0 {
            row.admitted += 1;
        } else {
            row.deferred += 1;
        }
        row.submitted += 1;
    }
    for a in &log.arrivals {
        let ratio = a.delay_ratio(log.t_sync);
        let row = &mut rows[a.k];
        row.max_delay_ratio = Some(row.max_delay_ratio.map_or(ratio, |m: f64| m.max(ratio)));
    }
    rows
}

/// Model transfers up to and including time `t`.
pub fn transfers_until(log: &MetricsLog, t: f64, counting: TransferCounting) -> u64 {
    let dispatched = log.dispatches.iter().filter(|d| d.time <= t).count() as u64;
    match counting {
        TransferCounting::PerDispatch => 2 * dispatched,
        TransferCounting::PerDirection => {
            dispatched + log.arrivals.iter().filter(|a| a.arrival <= t).count() as u64
        }
    }
}

/// Local steps of all updates that arrived by time `t`.
pub fn local_steps_until(log: &MetricsLog, t: f64) -> u64 {
    log.arrivals.iter().filter(|a| a.arrival <= t).map(|a| a.steps).sum()
}

/// `D_r` of every log against `reference`; `None` where the target was not
/// reached (or the reference never reached it).
pub fn movement_ratio(
    logs: &[&MetricsLog],
    reference: &MetricsLog,
    target: Target,
    counting: TransferCounting,
) -> Vec<Option<f64>> {
    let base = time_to_target(reference, target).map(|t| transfers_until(reference, t, counting));
    logs.iter()
        .map(|log| {
            let base = base? as f64;
            let t = time_to_target(log, target)?;
            Some(transfers_until(log, t, counting) as f64 / base)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

fn mean_std(xs: &[f64]) -> Option<ErrorStats> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some(ErrorStats { mean, std: var.sqrt(), count: xs.len() })
}

/// Sample mean and std of a series, optionally after one pass dropping points
/// more than `outlier_sigma` standard deviations from the mean (0 = off).
pub fn error_stats(xs: &[f64], outlier_sigma: f64) -> Option<ErrorStats> {
    let first = mean_std(xs)?;
    if outlier_sigma <= 0.0 || first.std == 0.0 {
        return Some(first);
    }
    let kept: Vec<f64> = xs
        .iter()
        .copied()
        .filter(|x| (x - first.mean).abs() <= outlier_sigma * first.std)
        .collect();
    mean_std(&kept)
}

/// Per-client statistics of `e = q - q_hat`; `None` with fewer than two
/// observations.
pub fn prediction_error_stats(log: &MetricsLog, outlier_sigma: f64) -> Vec<Option<ErrorStats>> {
    (0..log.num_clients)
        .map(|k| {
            let errs: Vec<f64> = log
                .arrivals
                .iter()
                .filter(|a| a.k == k)
                .filter_map(|a| a.prediction_error())
                .collect();
            error_stats(&errs, outlier_sigma)
        })
        .collect()
}

/// Median of finite values; `None` entries count as +infinity (never
/// reached), so a majority of misses yields `None`.
pub fn median_time(values: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    m.is_finite().then_some(m)
}

pub fn median(values: &[f64]) -> Option<f64> {
    median_time(&values.iter().map(|v| Some(*v)).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::log::{AdmittedUpdate, ArrivalRecord, DispatchRecord, RoundRecord};

    fn round(time: f64, accuracy: f64) -> RoundRecord {
        RoundRecord {
            round: 0,
            time,
            loss: 1.0 - accuracy,
            accuracy: Some(accuracy),
            admitted: Vec::new(),
            deferred: 0,
            buffered: 0,
            skipped: false,
            clients: Vec::new(),
        }
    }

    fn arrival(k: usize, submitted: f64, arrival: f64) -> ArrivalRecord {
        ArrivalRecord {
            k,
            job: 0,
            s: 0,
            submitted,
            start: submitted,
            arrival,
            q: 0.0,
            q_hat: None,
            steps: 10,
            local_time: 1.0,
        }
    }

    fn empty_log() -> MetricsLog {
        MetricsLog::new("fedqueue", 0, 1, 10.0, 0.2, 100.0)
    }

    #[test]
    fn time_to_target_examples() {
        let mut log = empty_log();
        log.rounds = vec![round(10.0, 0.5), round(20.0, 0.96)];
        assert_eq!(time_to_target(&log, Target::Accuracy(0.95)), Some(20.0));
        assert_eq!(time_to_target(&log, Target::Accuracy(0.99)), None);
        assert_eq!(time_to_target(&log, Target::Accuracy(0.0)), Some(10.0));
        assert_eq!(time_to_target(&log, Target::Loss(0.5)), Some(10.0));
    }

    #[test]
    fn delay_statistics_examples() {
        let s = delay_statistics_from_ratios(&[0.8, 1.2, 1.4]);
        assert!((s.p_late - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.expected_late_ratio.unwrap() - 1.3).abs() < 1e-12);
        assert_eq!(s.max_ratio, Some(1.4));

        let s = delay_statistics_from_ratios(&[0.5, 0.9, 1.0]);
        assert_eq!(s.p_late, 0.0);
        assert_eq!(s.expected_late_ratio, None);
        assert!(s.max_ratio.unwrap() <= 1.0);

        let mut log = empty_log();
        log.arrivals = vec![arrival(0, 20.0, 35.0)];
        let s = delay_statistics(&log);
        assert_eq!((s.p_late, s.expected_late_ratio, s.max_ratio), (1.0, Some(1.5), Some(1.5)));
    }

    #[test]
    fn admission_summary_counts() {
        let mut log = empty_log();
        log.arrivals = vec![arrival(0, 0.0, 9.0), arrival(0, 0.0, 11.0), arrival(0, 0.0, 13.0)];
        let upd = |tau| AdmittedUpdate { k: 0, job: 0, s: 0, tau, coefficient: 1.0 };
        let mut r0 = round(10.0, 0.5);
        r0.admitted = vec![upd(0)];
        let mut r1 = round(20.0, 0.5);
        r1.admitted = vec![upd(1), upd(1)];
        log.rounds = vec![r0, r1];
        let rows = admission_summary(&log);
        assert_eq!(
            (rows[0].submitted, rows[0].admitted, rows[0].deferred),
            (3, 1, 2)
        );
        assert!((rows[0].max_delay_ratio.unwrap() - 1.3).abs() < 1e-12);
    }

    fn dispatch(time: f64) -> DispatchRecord {
        DispatchRecord { k: 0, job: 0, s: 0, time, max_steps: 1, eta: 0.1, budget_j: None, q_hat: None }
    }

    #[test]
    fn movement_ratio_examples() {
        let mut fq = empty_log();
        fq.rounds = vec![round(10.0, 0.96)];
        fq.dispatches = (0..25).map(|_| dispatch(0.0)).collect();
        let mut other = empty_log();
        other.rounds = vec![round(30.0, 0.96)];
        other.dispatches = (0..40).map(|_| dispatch(1.0)).collect();
        let mut never = empty_log();
        never.rounds = vec![round(30.0, 0.5)];
        let t = Target::Accuracy(0.95);
        let r = movement_ratio(&[&fq, &other, &never], &fq, t, TransferCounting::PerDispatch);
        assert_eq!(r[0], Some(1.0));
        assert!((r[1].unwrap() - 1.6).abs() < 1e-12);
        assert_eq!(r[2], None);
    }

    #[test]
    fn error_stat_examples() {
        let s = error_stats(&[-1.0, 1.0], 0.0).unwrap();
        assert_eq!(s.mean, 0.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        let s = error_stats(&[0.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!((s.mean, s.std), (0.0, 0.0));
        assert!(error_stats(&[1.0], 0.0).is_none());
        let mut xs = vec![0.0; 50];
        xs.push(100.0);
        let s = error_stats(&xs, 3.0).unwrap();
        assert_eq!(s.count, 50);
    }

    #[test]
    fn median_handles_misses() {
        assert_eq!(median_time(&[Some(1.0), None, Some(3.0)]), Some(3.0));
        assert_eq!(median_time(&[None, None, Some(3.0)]), None);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
