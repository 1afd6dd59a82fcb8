//! Episodic two-objective environment.
//!
//! One slot of length `tau` runs, in order:
//!
//! 1. the UAV moves; leaving the mission rectangle yields the penalty reward
//!    `(-W, -W)` and the pose is clamped back onto the boundary;
//! 2. if the acceptance scalar exceeds 0.5, every in-coverage device with a
//!    pending task uploads, all of them transmitting simultaneously;
//! 3. uploaded tasks are enqueued (nearest device first) and the configured
//!    scheduler re-orders the not-yet-started queue;
//! 4. the processor runs the queue serially, non-preemptively, for `tau`
//!    seconds of wall time;
//! 5. the reward is `(-D_t, -E_t)` for the slot's uploads;
//! 6. tasks still waiting on their device accrue `tau` of waiting time.
//!
//! Everything needed to recompute the episode objectives is kept in the
//! [`EpisodeLedger`].

use crate::model::{self, ComputeParams, ChannelParams, ComputeTask, GroundDevice, MoveError, Position3, PropulsionParams, UavLimits};
use crate::scheduler::{self, QueueEntry, SaConfig, ScheduleError, SchedulerKind};
use crate::seed;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode already finished; call reset first")]
    EpisodeFinished,
    #[error("episode is not complete ({done} of {horizon} slots)")]
    IncompleteEpisode { done: usize, horizon: usize },
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskGenConfig {
    /// Slots between two generations on one device.
    pub period_slots: usize,
    /// Uniform range of task sizes, bits.
    pub size_range: [f64; 2],
    /// Uniform range of CPU cycles per bit.
    pub cycles_per_bit_range: [f64; 2],
}

impl Default for TaskGenConfig {
    fn default() -> Self {
        Self { period_slots: 10, size_range: [1e6, 5e6], cycles_per_bit_range: [500.0, 1500.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    /// Penalty `W` applied to both components on a boundary violation.
    pub penalty_w: f64,
    /// Per-objective discount factors `(gamma_delay, gamma_energy)`.
    pub discounts: [f64; 2],
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { penalty_w: 1e4, discounts: [0.99, 0.99] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub n_gds: usize,
    /// Episode length in slots.
    pub horizon: usize,
    pub gd_transmit_power_w: f64,
    pub limits: UavLimits,
    pub channel: ChannelParams,
    pub propulsion: PropulsionParams,
    pub compute: ComputeParams,
    pub task_gen: TaskGenConfig,
    pub reward: RewardConfig,
    /// Set from the experiment's top-level `scheduler_kind`, not from the file.
    #[serde(skip)]
    pub scheduler_kind: SchedulerKind,
    pub sa: SaConfig,
    /// Seed of the ground-device layout. Episode seeds drive everything else.
    pub rng_seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            n_gds: 10,
            horizon: 200,
            gd_transmit_power_w: 0.1,
            limits: UavLimits::default(),
            channel: ChannelParams::default(),
            propulsion: PropulsionParams::default(),
            compute: ComputeParams::default(),
            task_gen: TaskGenConfig::default(),
            reward: RewardConfig::default(),
            scheduler_kind: SchedulerKind::Sa,
            sa: SaConfig::default(),
            rng_seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if self.n_gds == 0 {
            return bad("n_gds must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(self.gd_transmit_power_w > 0.0) {
            return bad("gd_transmit_power_w must be positive");
        }
        self.limits.validate()?;
        self.channel.validate()?;
        self.propulsion.validate()?;
        self.compute.validate()?;
        let tg = &self.task_gen;
        if tg.period_slots == 0 {
            return bad("task_gen.period_slots must be at least 1");
        }
        for (name, [lo, hi]) in [("size_range", tg.size_range), ("cycles_per_bit_range", tg.cycles_per_bit_range)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(EnvError::InvalidConfig(format!("task_gen.{name} must satisfy 0 < min <= max")));
            }
        }
        if !(self.reward.penalty_w > 0.0) {
            return bad("reward.penalty_w must be positive");
        }
        if self.reward.discounts.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return bad("reward.discounts must lie in [0, 1]");
        }
        self.sa.validate()?;
        Ok(())
    }

    /// Length of the feature vector produced by [`encode_state`].
    pub fn observation_dim(&self) -> usize {
        4 + 2 * self.n_gds
    }
}

/// Pending-task view of one device; zeros when nothing is pending.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GdStatus {
    pub arrival_time: f64,
    pub data_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub uav_pose: Position3,
    /// Tasks in the onboard queue that have not started computing.
    pub queue_len: usize,
    pub gd_status: Vec<GdStatus>,
    /// Index of the slot about to be played.
    pub clock: usize,
    /// The last move left the area (member of the invalid set).
    pub out_of_area: bool,
}

/// Decoded action: heading, distance and acceptance scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionTuple {
    pub theta: f64,
    pub dist: f64,
    pub accept: f64,
}

impl ActionTuple {
    pub fn accepts(&self) -> bool {
        self.accept > 0.5
    }
}

fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    if x.is_nan() {
        lo
    } else {
        x.clamp(lo, hi)
    }
}

/// Clips three unbounded reals into `[0, 2pi] x [0, d_max] x [0, 1]`.
pub fn decode_action(raw: [f64; 3], limits: &UavLimits) -> ActionTuple {
    ActionTuple {
        theta: clip(raw[0], 0.0, TAU),
        dist: clip(raw[1], 0.0, limits.d_max()),
        accept: clip(raw[2], 0.0, 1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorReward {
    pub r_delay: f64,
    pub r_energy: f64,
}

impl VectorReward {
    pub fn to_array(self) -> [f64; 2] {
        [self.r_delay, self.r_energy]
    }
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub clock: usize,
    /// Pose after the move (clamped when penalized).
    pub pose: Position3,
    /// Devices whose tasks were uploaded, nearest first.
    pub accepted: Vec<usize>,
    /// `D_t`: sum of compute and transmission delays of the slot's uploads.
    pub delay: f64,
    /// `E_t`: sum of compute and receive energies of the slot's uploads.
    pub energy: f64,
    pub compute_energy: f64,
    pub receive_energy: f64,
    /// Waiting time accrued by tasks still held on their devices.
    pub wait: f64,
    /// Queue waiting time that elapsed inside this slot.
    pub sched_accrued: f64,
    pub flight_energy: f64,
    pub penalized: bool,
    pub reward: VectorReward,
}

impl SlotRecord {
    /// Per-slot increments of `(f1, f2)`, or the penalty when penalized.
    ///
    /// Summed over an unpenalized episode this reproduces the objectives.
    pub fn objective_reward(&self, penalty_w: f64) -> [f64; 2] {
        if self.penalized {
            [-penalty_w, -penalty_w]
        } else {
            [-(self.delay + self.wait + self.sched_accrued), -(self.energy + self.flight_energy)]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeLedger {
    pub horizon: usize,
    pub initial_pose: Option<Position3>,
    pub slots: Vec<SlotRecord>,
    /// Device-side waiting time of every uploaded task, upload order.
    pub task_waits: Vec<f64>,
    /// Queue delay `D_s` of every task, in start order; tasks still queued
    /// at the end are appended truncated at the horizon.
    pub sched_delays: Vec<f64>,
    slot_sum_f1: f64,
    sched_sum: f64,
    energy_sum: f64,
    flight_sum: f64,
    complete: bool,
}

impl EpisodeLedger {
    fn new(horizon: usize, initial_pose: Position3) -> Self {
        Self { horizon, initial_pose: Some(initial_pose), ..Self::default() }
    }

    fn push_slot(&mut self, slot: SlotRecord) {
        self.slot_sum_f1 += slot.delay + slot.wait;
        self.energy_sum += slot.energy;
        self.flight_sum += slot.flight_energy;
        self.slots.push(slot);
    }

    fn push_sched_delay(&mut self, d: f64) {
        self.sched_sum += d;
        self.sched_delays.push(d);
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Accumulated `(f1, f2)` as tracked while stepping.
    pub fn running_objectives(&self) -> (f64, f64) {
        (self.slot_sum_f1 + self.sched_sum, self.energy_sum + self.flight_sum)
    }

    /// Total flight energy so far.
    pub fn flight_energy(&self) -> f64 {
        self.slots.iter().map(|s| s.flight_energy).sum()
    }

    /// Recomputes `(f1, f2)` from the per-slot and per-task records.
    pub fn recompute(&self) -> (f64, f64) {
        let slots = self.slots.iter().fold(0.0, |a, s| a + (s.delay + s.wait));
        let sched = self.sched_delays.iter().fold(0.0, |a, d| a + d);
        let energy = self.slots.iter().fold(0.0, |a, s| a + s.energy);
        let fly = self.slots.iter().fold(0.0, |a, s| a + s.flight_energy);
        (slots + sched, energy + fly)
    }
}

/// Episode objectives `(f1, f2)`: total delay and total UAV energy.
pub fn episode_objectives(ledger: &EpisodeLedger) -> Result<(f64, f64), EnvError> {
    if !ledger.complete {
        return Err(EnvError::IncompleteEpisode { done: ledger.slots.len(), horizon: ledger.horizon });
    }
    Ok(ledger.recompute())
}

/// Fixed affine feature map for learners.
///
/// Layout: `[x / x_max, y / y_max, queue_len / n_gds, clock / horizon]`
/// followed by `(arrival / (horizon * tau), bits / max_bits)` per device.
pub fn encode_state(state: &EnvState, cfg: &EnvConfig) -> Vec<f64> {
    let span = cfg.horizon as f64 * cfg.limits.slot_seconds;
    let mut v = Vec::with_capacity(cfg.observation_dim());
    v.push(state.uav_pose.x / cfg.limits.x_max);
    v.push(state.uav_pose.y / cfg.limits.y_max);
    v.push(state.queue_len as f64 / cfg.n_gds as f64);
    v.push(state.clock as f64 / cfg.horizon as f64);
    for s in &state.gd_status {
        v.push(s.arrival_time / span);
        v.push(s.data_bits / cfg.task_gen.size_range[1]);
    }
    v
}

/// Places the ground devices uniformly in the area from the layout seed.
pub fn ground_devices(cfg: &EnvConfig) -> Vec<GroundDevice> {
    let mut rng = seed::child_rng(cfg.rng_seed, "layout", &[]);
    (0..cfg.n_gds)
        .map(|id| GroundDevice {
            id,
            position: Position3::new(
                rng.random_range(0.0..=cfg.limits.x_max),
                rng.random_range(0.0..=cfg.limits.y_max),
                0.0,
            ),
            transmit_power: cfg.gd_transmit_power_w,
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Pending {
    task: ComputeTask,
    waited: f64,
}

#[derive(Debug, Clone)]
pub struct UavMecEnv {
    cfg: EnvConfig,
    gds: Vec<GroundDevice>,
    episode_seed: u64,
    clock: usize,
    pose: Position3,
    out_of_area: bool,
    pending: Vec<Option<Pending>>,
    phase: Vec<usize>,
    task_streams: Vec<seed::Rng>,
    queue: Vec<QueueEntry>,
    proc_free_at: f64,
    ledger: EpisodeLedger,
}

/// Result of one [`UavMecEnv::step`].
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: VectorReward,
    pub done: bool,
}

impl UavMecEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let gds = ground_devices(&cfg);
        let n = cfg.n_gds;
        let mut env = Self {
            gds,
            episode_seed: 0,
            clock: cfg.horizon,
            pose: Position3::new(0.0, 0.0, cfg.limits.altitude_m),
            out_of_area: false,
            pending: vec![None; n],
            phase: vec![0; n],
            task_streams: Vec::new(),
            queue: Vec::new(),
            proc_free_at: 0.0,
            ledger: EpisodeLedger::default(),
            cfg,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn devices(&self) -> &[GroundDevice] {
        &self.gds
    }

    pub fn ledger(&self) -> &EpisodeLedger {
        &self.ledger
    }

    pub fn clock(&self) -> usize {
        self.clock
    }

    pub fn is_done(&self) -> bool {
        self.clock >= self.cfg.horizon
    }

    /// Starts a new episode: random UAV position, empty queue, fresh task
    /// timelines. Identical seeds give identical episodes.
    pub fn reset(&mut self, episode_seed: u64) -> EnvState {
        let limits = self.cfg.limits;
        let mut rng = seed::child_rng(episode_seed, "reset", &[]);
        self.pose = Position3::new(
            rng.random_range(0.0..=limits.x_max),
            rng.random_range(0.0..=limits.y_max),
            limits.altitude_m,
        );
        self.episode_seed = episode_seed;
        self.clock = 0;
        self.out_of_area = false;
        self.queue.clear();
        self.proc_free_at = 0.0;
        let period = self.cfg.task_gen.period_slots;
        self.phase = (0..self.cfg.n_gds).map(|_| rng.random_range(0..period)).collect();
        self.task_streams = (0..self.cfg.n_gds as u64)
            .map(|i| seed::child_rng(episode_seed, "tasks", &[i]))
            .collect();
        self.pending = vec![None; self.cfg.n_gds];
        self.ledger = EpisodeLedger::new(self.cfg.horizon, self.pose);
        self.generate_tasks(0);
        self.state()
    }

    pub fn state(&self) -> EnvState {
        EnvState {
            uav_pose: self.pose,
            queue_len: self.queue.len(),
            gd_status: self
                .pending
                .iter()
                .map(|p| match p {
                    Some(p) => GdStatus { arrival_time: p.task.arrival_time, data_bits: p.task.data_bits },
                    None => GdStatus::default(),
                })
                .collect(),
            clock: self.clock,
            out_of_area: self.out_of_area,
        }
    }

    pub fn observe(&self) -> Vec<f64> {
        encode_state(&self.state(), &self.cfg)
    }

    /// Pending devices inside coverage of `pose`.
    pub fn pending_in_range(&self, pose: Position3) -> Vec<usize> {
        self.pending
            .iter()
            .enumerate()
            .filter(|(i, p)| p.is_some() && model::in_coverage(pose, self.gds[*i].position, &self.cfg.limits))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_pending(&self) -> bool {
        self.pending.iter().any(Option::is_some)
    }

    fn generate_tasks(&mut self, slot: usize) {
        let tg = self.cfg.task_gen;
        let arrival = slot as f64 * self.cfg.limits.slot_seconds;
        for i in 0..self.cfg.n_gds {
            let due = slot >= self.phase[i] && (slot - self.phase[i]).is_multiple_of(tg.period_slots);
            if !due || self.pending[i].is_some() {
                continue;
            }
            let rng = &mut self.task_streams[i];
            let bits = rng.random_range(tg.size_range[0]..=tg.size_range[1]);
            let mu = rng.random_range(tg.cycles_per_bit_range[0]..=tg.cycles_per_bit_range[1]);
            let task = ComputeTask { source_gd: i, data_bits: bits, cycles_per_bit: mu, arrival_time: arrival };
            self.pending[i] = Some(Pending { task, waited: 0.0 });
        }
    }

    pub fn step(&mut self, action: ActionTuple) -> Result<StepOutcome, EnvError> {
        if self.is_done() {
            return Err(EnvError::EpisodeFinished);
        }
        let cfg = &self.cfg;
        let tau = cfg.limits.slot_seconds;
        let t0 = self.clock as f64 * tau;
        let t1 = t0 + tau;
        let action = decode_action([action.theta, action.dist, action.accept], &cfg.limits);

        // (1) movement
        let (pose, penalized) = match model::move_uav(self.pose, action.theta, action.dist, &cfg.limits) {
            Ok(p) => (p, false),
            Err(MoveError::OutOfArea(p)) => (cfg.limits.clamp(p), true),
            Err(MoveError::Invalid(..)) => unreachable!("decoded actions are inside the box"),
        };
        self.pose = pose;
        self.out_of_area = penalized;
        let flight_energy = model::flight_energy_step(action.dist / tau, &cfg.propulsion, tau);

        // (2) uploads
        let mut accepted = if action.accepts() { self.pending_in_range(pose) } else { Vec::new() };
        accepted.sort_by(|&a, &b| {
            let da = model::horizontal_distance(pose, self.gds[a].position);
            let db = model::horizontal_distance(pose, self.gds[b].position);
            da.total_cmp(&db).then(a.cmp(&b))
        });
        let (mut delay, mut compute_energy, mut receive_energy) = (0.0, 0.0, 0.0);
        let mut uploads = Vec::with_capacity(accepted.len());
        for &i in &accepted {
            let s = model::sinr(i, &accepted, pose, &self.gds, &cfg.channel)?;
            let rate = model::uplink_rate(s, &cfg.channel);
            let p = self.pending[i].take().expect("accepted devices have a pending task");
            let g2a = model::g2a_delay(&p.task, rate)?;
            let d_u = model::compute_delay(&p.task, &cfg.compute);
            delay += d_u + g2a;
            compute_energy += model::compute_energy(&p.task, &cfg.compute);
            receive_energy += model::receive_energy(&p.task, rate, &cfg.compute)?;
            self.ledger.task_waits.push(p.waited);
            uploads.push(QueueEntry { task: p.task, enqueue_time: t0 + g2a, processing_time: d_u });
        }

        // (3) enqueue and re-order the unstarted queue
        if !uploads.is_empty() {
            self.queue.extend(uploads);
            if self.queue.len() > 1 {
                let sa_seed = seed::derive(self.episode_seed, "sa", &[self.clock as u64]);
                let order =
                    scheduler::order_queue(cfg.scheduler_kind, &self.queue, self.proc_free_at, &cfg.sa, sa_seed)?;
                self.queue = order.order().iter().map(|&i| self.queue[i]).collect();
            }
        }

        // (4) serial execution during [t0, t1)
        let mut sched_accrued = 0.0;
        let mut started = 0;
        for e in &self.queue {
            let start = self.proc_free_at.max(e.enqueue_time);
            if start >= t1 {
                break;
            }
            sched_accrued += (start - e.enqueue_time.max(t0)).max(0.0);
            self.ledger.push_sched_delay(start - e.enqueue_time);
            self.proc_free_at = start + e.processing_time;
            started += 1;
        }
        self.queue.drain(..started);
        sched_accrued += self.queue.iter().map(|e| (t1 - e.enqueue_time.max(t0)).max(0.0)).sum::<f64>();

        // (6) device-side waiting
        let mut wait = 0.0;
        for p in self.pending.iter_mut().flatten() {
            p.waited += tau;
            wait += tau;
        }

        // (5) reward
        let energy = compute_energy + receive_energy;
        let reward = if penalized {
            VectorReward { r_delay: -cfg.reward.penalty_w, r_energy: -cfg.reward.penalty_w }
        } else {
            VectorReward { r_delay: -delay, r_energy: -energy }
        };
        self.ledger.push_slot(SlotRecord {
            clock: self.clock,
            pose,
            accepted,
            delay,
            energy,
            compute_energy,
            receive_energy,
            wait,
            sched_accrued,
            flight_energy,
            penalized,
            reward,
        });

        self.clock += 1;
        let done = self.is_done();
        if done {
            let end = self.cfg.horizon as f64 * tau;
            for e in std::mem::take(&mut self.queue) {
                self.ledger.push_sched_delay((end - e.enqueue_time).max(0.0));
            }
            self.ledger.complete = true;
        } else {
            self.generate_tasks(self.clock);
        }
        Ok(StepOutcome { state: self.state(), reward, done })
    }
}

/// Anything that picks an action from the current state.
pub trait ActionSource {
    fn act(&mut self, state: &EnvState, env: &UavMecEnv) -> ActionTuple;
}

impl<F> ActionSource for F
where
    F: FnMut(&EnvState, &UavMecEnv) -> ActionTuple,
{
    fn act(&mut self, state: &EnvState, env: &UavMecEnv) -> ActionTuple {
        self(state, env)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub action: ActionTuple,
    pub reward: VectorReward,
    pub next_state: EnvState,
    pub done: bool,
}

/// Plays one full episode.
pub fn rollout<P: ActionSource + ?Sized>(
    policy: &mut P,
    cfg: &EnvConfig,
    episode_seed: u64,
) -> Result<(EpisodeLedger, Vec<Transition>), EnvError> {
    let mut env = UavMecEnv::new(cfg.clone())?;
    rollout_in(&mut env, policy, episode_seed)
}

/// As [`rollout`], reusing an existing environment.
pub fn rollout_in<P: ActionSource + ?Sized>(
    env: &mut UavMecEnv,
    policy: &mut P,
    episode_seed: u64,
) -> Result<(EpisodeLedger, Vec<Transition>), EnvError> {
    let mut state = env.reset(episode_seed);
    let mut transitions = Vec::with_capacity(env.config().horizon);
    loop {
        let action = decode_action({
            let a = policy.act(&state, env);
            [a.theta, a.dist, a.accept]
        }, &env.config().limits);
        let out = env.step(action)?;
        transitions.push(Transition {
            state: std::mem::replace(&mut state, out.state.clone()),
            action,
            reward: out.reward,
            next_state: out.state,
            done: out.done,
        });
        if out.done {
            break;
        }
    }
    Ok((env.ledger().clone(), transitions))
}
