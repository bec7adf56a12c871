//! Deadline-aware batch scheduling: the batch-size optimizer driven by the
//! T_b cost model, and the queue-per-exponent state machine with full-batch,
//! minibatch and conventional fallbacks.
//!
//! The scheduler owns no clock; every operation takes `now` from the caller,
//! so the same state machine runs under the simulator's virtual clock and
//! the server's wall clock.

use num_bigint::BigUint;
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::Seconds;

/// Cost-model and scheduling parameters. `t_r`, the deadline used by the
/// trigger, equals `t_i`: the client's tolerable waiting time is the only
/// bound the model defines.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig {
    /// Arrival rate, requests per second.
    pub lambda: f64,
    /// Client tolerable waiting time, seconds.
    pub t_i: Seconds,
    /// Measured cost of one conventional decryption, seconds.
    pub t_rsa: Seconds,
    /// Dimensionless coefficient in the T_b formula.
    pub k: f64,
    /// The "n" of the cost formula; modulus bit length by default.
    pub n_scale: u64,
    /// Scheduler tick, seconds.
    pub poll_granularity: Seconds,
    /// Per-queue capacity is this factor times b.
    pub queue_capacity_factor: usize,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            lambda: 100.0,
            t_i: 0.2,
            t_rsa: 0.01,
            k: 1.0,
            n_scale: 1024,
            poll_granularity: 0.001,
            queue_capacity_factor: 10,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("t_i", self.t_i),
            ("t_rsa", self.t_rsa),
            ("k", self.k),
            ("poll_granularity", self.poll_granularity),
        ];
        for (name, v) in positive {
            if v.is_nan() || !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_scale < 1 {
            return Err(Error::Config("n_scale must be at least 1".into()));
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` comments ignored. Unknown keys are
    /// rejected so typos surface early.
    pub fn from_config_text(text: &str) -> Result<SchedulerConfig> {
        let mut cfg = SchedulerConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let value = value.trim();
            let bad = |what: &str| Error::Parse(format!("line {}: bad {what}: {value}", lineno + 1));
            match key.trim() {
                "lambda" => cfg.lambda = value.parse().map_err(|_| bad("number"))?,
                "t_i" => cfg.t_i = value.parse().map_err(|_| bad("number"))?,
                "t_rsa" => cfg.t_rsa = value.parse().map_err(|_| bad("number"))?,
                "k" => cfg.k = value.parse().map_err(|_| bad("number"))?,
                "n_scale" => cfg.n_scale = value.parse().map_err(|_| bad("integer"))?,
                "poll_granularity_ms" => {
                    let ms: f64 = value.parse().map_err(|_| bad("number"))?;
                    cfg.poll_granularity = ms / 1e3;
                }
                "queue_capacity_factor" => {
                    cfg.queue_capacity_factor = value.parse().map_err(|_| bad("integer"))?
                }
                other => return Err(Error::Parse(format!("line {}: unknown key {other}", lineno + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Batch service time model, evaluated exactly as printed:
/// T_b = (3n^3 + n^2(42b + k(3b^3 + 3b) - 1)) * b * T_rsa / (b(3n^3 + n^2)).
/// The leading b cancels, so this is a per-batch cost; it is strictly
/// increasing in b.
pub fn compute_tb(b: u32, cfg: &SchedulerConfig) -> Seconds {
    let n = cfg.n_scale as f64;
    let b_f = b as f64;
    let n2 = n * n;
    let n3 = n2 * n;
    let inner = 42.0 * b_f + cfg.k * (3.0 * b_f * b_f * b_f + 3.0 * b_f) - 1.0;
    (3.0 * n3 + n2 * inner) * b_f * cfg.t_rsa / (b_f * (3.0 * n3 + n2))
}

/// maxbatchsize = Int(0.4 * lambda * T_i + 1).
pub fn max_batch_size(lambda: f64, t_i: Seconds) -> u32 {
    (0.4 * lambda * t_i + 1.0).floor() as u32
}

/// Step-1 optimizer: scans b = 2..=maxbatchsize and keeps the largest b
/// whose batch time beats the arrival interval, T_b < b/lambda. `None`
/// signals conventional mode (maxbatchsize <= 1, or no b qualifies).
pub fn find_optimal_batch_size(cfg: &SchedulerConfig) -> Option<u32> {
    let max = max_batch_size(cfg.lambda, cfg.t_i);
    if max <= 1 {
        return None;
    }
    let mut best = None;
    for b in 2..=max {
        if compute_tb(b, cfg) < b as f64 / cfg.lambda {
            best = Some(b);
        }
    }
    best
}

/// A decryption request waiting in its exponent queue.
#[derive(Debug, Clone)]
pub struct PendingRequest {
    pub id: u64,
    pub exponent_index: usize,
    pub ciphertext: BigUint,
    /// Client timer origin, set at enqueue.
    pub enqueued_at: Seconds,
}

impl PendingRequest {
    pub fn new(id: u64, exponent_index: usize, ciphertext: BigUint) -> PendingRequest {
        PendingRequest { id, exponent_index, ciphertext, enqueued_at: 0.0 }
    }
}

/// Head-of-queue reference carried by an Action so completion can verify it
/// consumes exactly what was issued.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Head {
    pub queue: usize,
    pub request_id: u64,
}

/// Scheduling decision for one poll.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Heads of all b queues.
    FullBatch(Vec<Head>),
    /// Heads of the named subset (>= 2) of nonempty queues.
    MiniBatch(Vec<Head>),
    /// A lone survivor, decrypted conventionally.
    Conventional(Head),
    /// Nothing to do before this many seconds.
    Wait(Seconds),
}

impl Action {
    pub fn heads(&self) -> &[Head] {
        match self {
            Action::FullBatch(h) | Action::MiniBatch(h) => h,
            Action::Conventional(h) => std::slice::from_ref(h),
            Action::Wait(_) => &[],
        }
    }

    pub fn is_wait(&self) -> bool {
        matches!(self, Action::Wait(_))
    }
}

/// b FIFO queues plus the round-robin cursor and the server-waiting origin.
/// Single-owner: one logical actor calls enqueue/poll/complete.
#[derive(Debug)]
pub struct QueueState {
    queues: Vec<VecDeque<PendingRequest>>,
    cursor: usize,
    /// Time of the last decryption action; `None` until the first one, so an
    /// idle-from-start server only fires on request age.
    last_action_at: Option<Seconds>,
    capacity_per_queue: usize,
}

impl QueueState {
    pub fn new(b: usize, cfg: &SchedulerConfig) -> QueueState {
        QueueState::with_capacity(b, cfg.queue_capacity_factor.saturating_mul(b))
    }

    pub fn with_capacity(b: usize, capacity_per_queue: usize) -> QueueState {
        assert!(b >= 1);
        QueueState {
            queues: (0..b).map(|_| VecDeque::new()).collect(),
            cursor: 0,
            last_action_at: None,
            capacity_per_queue,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.queues.len()
    }

    pub fn queued(&self) -> usize {
        self.queues.iter().map(|q| q.len()).sum()
    }

    pub fn queue_len(&self, index: usize) -> usize {
        self.queues[index].len()
    }

    fn server_waiting_time(&self, now: Seconds) -> Seconds {
        self.last_action_at.map_or(0.0, |t| now - t)
    }

    /// Oldest head-of-queue waiting time across nonempty queues.
    fn maxtimer(&self, now: Seconds) -> Option<Seconds> {
        self.queues
            .iter()
            .filter_map(|q| q.front().map(|r| now - r.enqueued_at))
            .max_by(|a, b| a.partial_cmp(b).unwrap())
    }
}

/// Round-robin exponent assignment for client hellos: returns the cursor,
/// then advances it mod b.
pub fn assign_exponent(state: &mut QueueState) -> usize {
    let index = state.cursor;
    state.cursor = (state.cursor + 1) % state.queues.len();
    index
}

/// Appends the request to its exponent queue and starts its client timer.
pub fn enqueue_request(state: &mut QueueState, mut req: PendingRequest, now: Seconds) -> Result<()> {
    let index = req.exponent_index;
    if index >= state.queues.len() {
        return Err(Error::InvalidInput(format!(
            "exponent index {index} out of range for b = {}",
            state.queues.len()
        )));
    }
    if state.queues[index].len() >= state.capacity_per_queue {
        return Err(Error::Overload(format!(
            "queue {index} at capacity {}",
            state.capacity_per_queue
        )));
    }
    req.enqueued_at = now;
    state.queues[index].push_back(req);
    Ok(())
}

/// One scheduling decision. Branch order: full batch first, then the
/// deadline trigger (minibatch or conventional), else wait.
pub fn poll(state: &QueueState, cfg: &SchedulerConfig, now: Seconds) -> Action {
    let heads = |indices: &[usize]| -> Vec<Head> {
        indices
            .iter()
            .map(|&i| Head { queue: i, request_id: state.queues[i].front().unwrap().id })
            .collect()
    };

    let nonempty: Vec<usize> =
        (0..state.queues.len()).filter(|&i| !state.queues[i].is_empty()).collect();

    if nonempty.len() == state.queues.len() {
        return Action::FullBatch(heads(&nonempty));
    }

    let Some(maxtimer) = state.maxtimer(now) else {
        return Action::Wait(cfg.poll_granularity);
    };

    let t_r = cfg.t_i;
    if maxtimer >= t_r || state.server_waiting_time(now) >= t_r - maxtimer {
        if nonempty.len() >= 2 {
            return Action::MiniBatch(heads(&nonempty));
        }
        return Action::Conventional(heads(&nonempty).pop().unwrap());
    }

    Action::Wait(cfg.poll_granularity.min((t_r - maxtimer).max(0.0)))
}

/// Removes the consumed heads and resets the server-waiting origin. Returns
/// the popped requests in the action's head order so the caller can hand
/// them to the decryption workers.
pub fn complete_action(
    state: &mut QueueState,
    action: &Action,
    now: Seconds,
) -> Result<Vec<PendingRequest>> {
    let heads = action.heads();
    if heads.is_empty() {
        return Err(Error::Integrity("completing a Wait action".into()));
    }
    for head in heads {
        match state.queues.get(head.queue).and_then(|q| q.front()) {
            Some(front) if front.id == head.request_id => {}
            _ => {
                return Err(Error::Integrity(format!(
                    "request {} is no longer at the head of queue {}",
                    head.request_id, head.queue
                )))
            }
        }
    }
    let popped = heads
        .iter()
        .map(|head| state.queues[head.queue].pop_front().unwrap())
        .collect();
    state.last_action_at = Some(now);
    Ok(popped)
}
