//! Lockstep driver, regret accounting, good-event monitoring and sweeps.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::env::{self, ConfigError, FeedbackMode, InstanceConfig, OptimalAllocation};
use crate::protocol::{Event, Globals, Phase, Player, PlayerOptions, StepTag};

pub const MAX_SERIES_POINTS: u64 = 10_000;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("players out of sync at t={t}: {detail}")]
    Desync { t: u64, detail: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Policy {
    #[default]
    Protocol,
    /// Every player runs simple round robin over all arms forever.
    SimpleRoundRobin,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub enum TraceLevel {
    #[default]
    Off,
    Events,
    Steps,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub instance: InstanceConfig,
    pub trace: TraceLevel,
    /// Stop after this many steps even if the horizon is larger.
    pub max_steps: Option<u64>,
    pub policy: Policy,
    pub silent_coordinator: bool,
}

impl RunConfig {
    pub fn new(instance: InstanceConfig) -> Self {
        Self {
            instance,
            trace: TraceLevel::Off,
            max_steps: None,
            policy: Policy::Protocol,
            silent_coordinator: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PhaseRegret {
    pub phase1: f64,
    pub phase2_explore: f64,
    pub communication: f64,
    pub phase3: f64,
    pub exploitation: f64,
}

impl PhaseRegret {
    fn slot(&mut self, phase: Phase) -> &mut f64 {
        match phase {
            Phase::Explore => &mut self.phase1,
            Phase::Rounds => &mut self.phase2_explore,
            Phase::Signal | Phase::Block => &mut self.communication,
            Phase::Probe => &mut self.phase3,
            Phase::Fixed | Phase::Ucb => &mut self.exploitation,
        }
    }

    pub fn total(&self) -> f64 {
        self.phase1 + self.phase2_explore + self.communication + self.phase3 + self.exploitation
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegretLedger {
    pub cumulative: f64,
    pub stride: u64,
    /// (t, cumulative regret after step t) every `stride` steps and at the end.
    pub series: Vec<(u64, f64)>,
    pub by_phase: PhaseRegret,
}

impl RegretLedger {
    pub fn new(horizon: u64) -> Self {
        Self {
            cumulative: 0.0,
            stride: horizon.div_ceil(MAX_SERIES_POINTS).max(1),
            series: Vec::new(),
            by_phase: PhaseRegret::default(),
        }
    }

    /// Record `r` for step `t` (1-based).
    pub fn add(&mut self, t: u64, r: f64, phase: Phase) {
        self.cumulative += r;
        *self.by_phase.slot(phase) += r;
        if t % self.stride == 0 {
            self.series.push((t, self.cumulative));
        }
    }

    /// Steps `from+1..=to`, each costing `r`.
    pub fn add_constant(&mut self, from: u64, to: u64, r: f64, phase: Phase) {
        if to <= from {
            return;
        }
        let mut t = from;
        let mut next = (from / self.stride + 1) * self.stride;
        while next <= to {
            self.cumulative += r * (next - t) as f64;
            self.series.push((next, self.cumulative));
            t = next;
            next += self.stride;
        }
        self.cumulative += r * (to - t) as f64;
        *self.by_phase.slot(phase) += r * (to - from) as f64;
    }

    fn close(&mut self, t: u64) {
        if self.series.last().map(|&(s, _)| s) != Some(t) {
            self.series.push((t, self.cumulative));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub t: u64,
    pub player: usize,
    pub arm: usize,
    pub psi: usize,
    pub count: u64,
    pub estimate: f64,
    pub truth: f64,
}

/// Checks |μ̂ - μ| ≤ B(N) on every estimator update, using the true means.
#[derive(Clone, Debug, Default)]
pub struct GoodEventMonitor {
    pub violations: Vec<Violation>,
}

impl GoodEventMonitor {
    pub fn truth(inst: &InstanceConfig, arm: usize, psi: usize) -> f64 {
        let a = &inst.arms[arm];
        match inst.feedback_mode {
            FeedbackMode::HardSax if psi <= a.capacity => a.mean,
            FeedbackMode::HardSax => 0.0,
            FeedbackMode::AggregateSoft => a.mean * psi.min(a.capacity) as f64 / psi as f64,
        }
    }

    fn check(&mut self, inst: &InstanceConfig, t: u64, player: &mut Player) {
        for &(arm, psi) in player.updates() {
            let (count, estimate) = player.estimate(arm, psi);
            let truth = Self::truth(inst, arm, psi);
            if (estimate - truth).abs() > player.params().b(count) + 1e-12 {
                self.violations.push(Violation {
                    t,
                    player: player.id(),
                    arm,
                    psi,
                    count,
                    estimate,
                    truth,
                });
            }
        }
        player.clear_updates();
    }

    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRow {
    pub t: u64,
    pub player: usize,
    pub arm: usize,
    pub psi: usize,
    pub pass: u8,
    pub in_full_group: bool,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    pub horizon: u64,
    pub seed: u64,
    pub steps: u64,
    pub ledger: RegretLedger,
    pub final_assignment: Vec<Option<usize>>,
    pub timeline: Vec<Event>,
    pub good_event: bool,
    pub violations: Vec<Violation>,
    /// False when the horizon ended before every player settled.
    pub complete: bool,
    pub phase1_steps: u64,
    pub partition_epochs: u32,
    pub comm: Vec<Option<(usize, u64)>>,
    pub triggers: Vec<Option<(usize, u64)>>,
    pub ucb: Vec<bool>,
    pub known_capacities: Vec<Option<usize>>,
}

pub fn globals(inst: &InstanceConfig) -> Globals {
    Globals {
        m: inst.players,
        k: inst.k(),
        delta: inst.delta(),
        mode: inst.feedback_mode,
    }
}

pub fn run_episode(cfg: &RunConfig) -> Result<RunResult, RunError> {
    run_episode_with(cfg, &mut |_| {})
}

/// Like `run_episode`, handing one row per player and step to `on_step`
/// when the trace level is `Steps`.
pub fn run_episode_with(cfg: &RunConfig, on_step: &mut dyn FnMut(StepRow)) -> Result<RunResult, RunError> {
    let inst = &cfg.instance;
    inst.validate()?;
    let opt = env::optimal_allocation(inst)?;
    let horizon = cfg.max_steps.map_or(inst.horizon, |m| m.min(inst.horizon));
    match cfg.policy {
        Policy::Protocol => run_protocol(cfg, &opt, horizon, on_step),
        Policy::SimpleRoundRobin => Ok(run_simple_rr(cfg, &opt, horizon)),
    }
}

fn run_simple_rr(cfg: &RunConfig, opt: &OptimalAllocation, horizon: u64) -> RunResult {
    let inst = &cfg.instance;
    let k = inst.k();
    let mut ledger = RegretLedger::new(horizon);
    let mut profile = vec![0; inst.players];
    for t in 0..horizon {
        for (p, a) in profile.iter_mut().enumerate() {
            *a = (p + t as usize % k) % k;
        }
        ledger.add(t + 1, env::step_regret(inst, opt, &profile), Phase::Explore);
    }
    ledger.close(horizon);
    RunResult {
        horizon: inst.horizon,
        seed: inst.seed,
        steps: horizon,
        ledger,
        final_assignment: vec![None; inst.players],
        timeline: Vec::new(),
        good_event: true,
        violations: Vec::new(),
        complete: false,
        phase1_steps: horizon,
        partition_epochs: 0,
        comm: vec![None; inst.players],
        triggers: vec![None; inst.players],
        ucb: vec![false; inst.players],
        known_capacities: vec![None; k],
    }
}

fn check_sync(players: &[Player], t: u64) -> Result<(), RunError> {
    // players in UCB or settled carry no key; a lone UCB coordinator is
    // legal while listeners wait out their silent checkpoints
    let Some(first) = players.iter().find_map(Player::sync_key) else {
        return Ok(());
    };
    for (p, k) in players.iter().map(Player::sync_key).enumerate() {
        if k.is_some_and(|k| k != first) {
            return Err(RunError::Desync {
                t,
                detail: format!("player {p} at {:?}/{:?}, expected {first:?}", players[p].phase(), k),
            });
        }
    }
    Ok(())
}

fn run_protocol(
    cfg: &RunConfig,
    opt: &OptimalAllocation,
    horizon: u64,
    on_step: &mut dyn FnMut(StepRow),
) -> Result<RunResult, RunError> {
    let inst = &cfg.instance;
    let gl = globals(inst);
    let opts = PlayerOptions {
        trace: cfg.trace >= TraceLevel::Events,
        silent_coordinator: cfg.silent_coordinator,
    };
    let mut players: Vec<Player> = (0..gl.m).map(|p| Player::new(p, gl, opts)).collect();
    let mut ledger = RegretLedger::new(horizon);
    let mut monitor = GoodEventMonitor::default();
    let mut timeline = Vec::new();
    let mut phase1_steps = None;
    let mut profile = vec![0; gl.m];
    let mut tags = vec![StepTag::default(); gl.m];
    let mut rewards = vec![0.0; gl.m];
    let mut t = 0;
    while t < horizon {
        if let Some(arms) = players.iter().map(Player::settled_arm).collect::<Option<Vec<_>>>() {
            let r = env::step_regret(inst, opt, &arms);
            ledger.add_constant(t, horizon, r, Phase::Fixed);
            t = horizon;
            break;
        }
        let phase = players[0].phase();
        for (p, pl) in players.iter_mut().enumerate() {
            if cfg.trace >= TraceLevel::Steps {
                tags[p] = pl.step_tag();
            }
            profile[p] = pl.act();
        }
        env::sample_feedback_into(inst, &profile, t, &mut rewards)?;
        t += 1;
        ledger.add(t, env::step_regret(inst, opt, &profile), phase);
        for (p, pl) in players.iter_mut().enumerate() {
            pl.observe(rewards[p]);
            monitor.check(inst, t, pl);
            if opts.trace {
                timeline.extend(pl.drain_events());
            }
            if cfg.trace >= TraceLevel::Steps {
                on_step(StepRow {
                    t,
                    player: p,
                    arm: profile[p],
                    psi: tags[p].psi,
                    pass: tags[p].pass,
                    in_full_group: tags[p].full,
                    reward: rewards[p],
                });
            }
        }
        if phase1_steps.is_none() && !matches!(players[0].phase(), Phase::Explore | Phase::Signal) {
            phase1_steps = Some(t);
        }
        check_sync(&players, t)?;
    }
    ledger.close(horizon);
    let final_assignment: Vec<Option<usize>> = players.iter().map(Player::settled_arm).collect();
    Ok(RunResult {
        horizon: inst.horizon,
        seed: inst.seed,
        steps: horizon,
        ledger,
        complete: final_assignment.iter().all(Option::is_some),
        final_assignment,
        timeline,
        good_event: monitor.holds(),
        violations: monitor.violations,
        phase1_steps: phase1_steps.unwrap_or(t),
        partition_epochs: players[0].epochs(),
        comm: players.iter().map(Player::comm).collect(),
        triggers: players.iter().map(Player::trigger_record).collect(),
        ucb: players.iter().map(Player::in_ucb).collect(),
        known_capacities: players[0].known_capacities().unwrap_or_else(|| vec![None; gl.k]),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub horizon: u64,
    pub seed: u64,
    pub cumulative_regret: f64,
    pub good_event: bool,
    pub phase1_steps: u64,
    pub partition_epochs: u32,
    pub final_assignment: String,
}

impl SweepRow {
    pub fn from_result(r: &RunResult) -> Self {
        Self {
            horizon: r.horizon,
            seed: r.seed,
            cumulative_regret: r.ledger.cumulative,
            good_event: r.good_event,
            phase1_steps: r.phase1_steps,
            partition_epochs: r.partition_epochs,
            final_assignment: pack_assignment(&r.final_assignment),
        }
    }
}

/// Arm per player joined by ';', '-' for players without a final arm.
pub fn pack_assignment(a: &[Option<usize>]) -> String {
    a.iter()
        .map(|x| x.map_or_else(|| "-".to_string(), |v| v.to_string()))
        .collect::<Vec<_>>()
        .join(";")
}

/// One episode per (horizon, seed); rows sorted by that key.
pub fn sweep(base: &RunConfig, horizons: &[u64], seeds: &[u64], jobs: usize) -> Result<Vec<SweepRow>, RunError> {
    let mut keys: Vec<(u64, u64)> = horizons
        .iter()
        .flat_map(|&h| seeds.iter().map(move |&s| (h, s)))
        .collect();
    keys.sort_unstable();
    let work = || {
        keys.par_iter()
            .map(|&(h, s)| {
                let mut cfg = base.clone();
                cfg.instance.horizon = h;
                cfg.instance.seed = s;
                run_episode(&cfg).map(|r| SweepRow::from_result(&r))
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(work)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HorizonSummary {
    pub horizon: u64,
    pub runs: usize,
    pub mean: f64,
    pub sd: f64,
}

pub fn summarize(rows: &[SweepRow]) -> Vec<HorizonSummary> {
    let mut horizons: Vec<u64> = rows.iter().map(|r| r.horizon).collect();
    horizons.dedup();
    horizons
        .into_iter()
        .map(|h| {
            let xs: Vec<f64> = rows.iter().filter(|r| r.horizon == h).map(|r| r.cumulative_regret).collect();
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            HorizonSummary {
                horizon: h,
                runs: n,
                mean,
                sd: var.sqrt(),
            }
        })
        .collect()
}

/// Fraction of seeds `0..n_seeds` whose run never violated the confidence bound.
pub fn good_event_rate(base: &RunConfig, n_seeds: u64) -> Result<f64, RunError> {
    let mut good = 0;
    for s in 0..n_seeds {
        let mut cfg = base.clone();
        cfg.instance.seed = s;
        if run_episode(&cfg)?.good_event {
            good += 1;
        }
    }
    Ok(good as f64 / n_seeds as f64)
}

/// Regret of one simple round-robin cycle: K·Σ μ·C̃ − M·Σ_j μ_j.
pub fn simple_rr_round_regret(inst: &InstanceConfig) -> Result<f64, ConfigError> {
    let opt = env::optimal_allocation(inst)?;
    let k = inst.k() as f64;
    let total: f64 = inst.arms.iter().map(|a| a.mean).sum();
    Ok(k * opt.value - inst.players as f64 * total)
}

/// Push `bits` through signal testing blocks and return what each player
/// read (player 0 reads its own bits). Everyone takes part in every block.
pub fn transmit_frame(
    inst: &InstanceConfig,
    comm_arm: usize,
    w: u64,
    bits: &[bool],
    t0: u64,
) -> Result<Vec<Vec<bool>>, ConfigError> {
    use crate::protocol::{codec, BlockLayout};
    let m = inst.players;
    let cap = inst.arms[comm_arm].capacity;
    let layout = BlockLayout::new(m, inst.k(), comm_arm, cap, w);
    let windows: Vec<_> = (0..m).map(|p| layout.listen_window(p)).collect();
    let mut out = vec![Vec::with_capacity(bits.len()); m];
    let mut t = t0;
    let mut profile = vec![0; m];
    for &bit in bits {
        let mut heard = vec![Vec::new(); m];
        for s in 0..layout.len() {
            for (p, a) in profile.iter_mut().enumerate() {
                *a = layout.pull(p, s, bit);
            }
            let r = env::sample_feedback(inst, &profile, t)?;
            t += 1;
            for p in 1..m {
                if windows[p].as_ref().is_some_and(|win| win.contains(&s)) {
                    heard[p].push(r[p]);
                }
            }
        }
        out[0].push(bit);
        for p in 1..m {
            let mu = inst.arms[comm_arm].mean;
            out[p].push(codec::read_bit(&heard[p], inst.feedback_mode, mu, m));
        }
    }
    Ok(out)
}
