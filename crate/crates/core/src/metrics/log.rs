use serde::Serialize;

/// One update folded into the global model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmittedUpdate {
    pub k: usize,
    pub job: u64,
    pub s: u64,
    pub tau: u64,
    /// Normalized aggregation coefficient actually applied.
    pub coefficient: f64,
}

/// Per-client columns of a round record. `None` when nothing happened for
/// that client during the round.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ClientRound {
    /// Delay of the most recent arrival processed this round.
    pub q: Option<f64>,
    /// Prediction in force at the end of the round.
    pub q_hat: Option<f64>,
    /// `q - q_hat` for that arrival, using the prediction it was budgeted with.
    pub e: Option<f64>,
    /// Step budget of a dispatch made this round.
    pub budget_steps: Option<u64>,
    pub eta: Option<f64>,
    /// Steps reported by the most recent arrival.
    pub steps: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: u64,
    pub time: f64,
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub admitted: Vec<AdmittedUpdate>,
    /// Jobs issued for this round that missed its cutoff.
    pub deferred: usize,
    /// Messages left in the server buffer after admission.
    pub buffered: usize,
    pub skipped: bool,
    pub clients: Vec<ClientRound>,
}

impl RoundRecord {
    pub fn mean_tau(&self) -> Option<f64> {
        if self.admitted.is_empty() {
            None
        } else {
            Some(self.admitted.iter().map(|a| a.tau as f64).sum::<f64>() / self.admitted.len() as f64)
        }
    }

    pub fn max_tau(&self) -> Option<u64> {
        self.admitted.iter().map(|a| a.tau).max()
    }

    pub fn quality(&self) -> f64 {
        self.accuracy.unwrap_or(-self.loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchRecord {
    pub k: usize,
    pub job: u64,
    pub s: u64,
    pub time: f64,
    pub max_steps: u64,
    pub eta: f64,
    /// Job-time budget, FedQueue only.
    pub budget_j: Option<f64>,
    pub q_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrivalRecord {
    pub k: usize,
    pub job: u64,
    pub s: u64,
    pub submitted: f64,
    pub start: f64,
    pub arrival: f64,
    pub q: f64,
    /// Prediction the job was budgeted with.
    pub q_hat: Option<f64>,
    pub steps: u64,
    pub local_time: f64,
}

impl ArrivalRecord {
    /// `(a - submit) / T_sync`.
    pub fn delay_ratio(&self, t_sync: f64) -> f64 {
        (self.arrival - self.submitted) / t_sync
    }

    pub fn prediction_error(&self) -> Option<f64> {
        self.q_hat.map(|p| self.q - p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Warmup { time: f64, k: usize, q: f64, throughput: f64 },
    Dispatch { time: f64, k: usize, job: u64, s: u64, steps: u64, eta: f64 },
    JobStart { time: f64, k: usize, job: u64 },
    Arrival { time: f64, k: usize, job: u64, s: u64, q: f64, steps: u64 },
    Aggregate { time: f64, round: u64, admitted: usize, deferred: usize, buffered: usize },
    Skip { time: f64, round: u64, deferred: usize, buffered: usize },
    Failed { time: f64, message: String },
}

impl LogEvent {
    pub fn time(&self) -> f64 {
        match self {
            LogEvent::Warmup { time, .. }
            | LogEvent::Dispatch { time, .. }
            | LogEvent::JobStart { time, .. }
            | LogEvent::Arrival { time, .. }
            | LogEvent::Aggregate { time, .. }
            | LogEvent::Skip { time, .. }
            | LogEvent::Failed { time, .. } => *time,
        }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsLog {
    pub algorithm: String,
    pub seed: u64,
    pub num_clients: usize,
    pub t_sync: f64,
    pub gamma: f64,
    pub time_budget: f64,
    pub initial_loss: f64,
    pub initial_accuracy: Option<f64>,
    pub rounds: Vec<RoundRecord>,
    pub dispatches: Vec<DispatchRecord>,
    pub arrivals: Vec<ArrivalRecord>,
    pub events: Vec<LogEvent>,
    /// Deferred jobs never admitted before the run ended.
    pub pending_deferred: usize,
    pub failed: Option<String>,
    /// Global model after the last recorded round (the initial model if none).
    #[serde(skip)]
    pub final_model: Vec<f64>,
}

impl MetricsLog {
    pub fn new(algorithm: &str, seed: u64, num_clients: usize, t_sync: f64, gamma: f64, time_budget: f64) -> Self {
        MetricsLog {
            algorithm: algorithm.to_string(),
            seed,
            num_clients,
            t_sync,
            gamma,
            time_budget,
            initial_loss: f64::NAN,
            initial_accuracy: None,
            rounds: Vec::new(),
            dispatches: Vec::new(),
            arrivals: Vec::new(),
            events: Vec::new(),
            pending_deferred: 0,
            failed: None,
            final_model: Vec::new(),
        }
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.rounds.last().and_then(|r| r.accuracy).or(self.initial_accuracy)
    }

    pub fn final_loss(&self) -> f64 {
        self.rounds.last().map_or(self.initial_loss, |r| r.loss)
    }

    pub fn max_accuracy(&self) -> Option<f64> {
        self.rounds
            .iter()
            .filter_map(|r| r.accuracy)
            .chain(self.initial_accuracy)
            .fold(None, |m: Option<f64>, a| Some(m.map_or(a, |m| m.max(a))))
    }

    pub fn total_local_steps(&self) -> u64 {
        self.arrivals.iter().map(|a| a.steps).sum()
    }

    /// Stable 64-bit digest of the serialized log.
    pub fn checksum(&self) -> u64 {
        let bytes = serde_json::to_vec(self).unwrap_or_default();
        // FNV-1a
        bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
        })
    }
}
