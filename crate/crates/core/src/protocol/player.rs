use serde::Serialize;

use super::codec::{self, BlockLayout, POSTPONE};
use super::graph::ConnectivityGraph;
use super::recursion::{apply_code, recursion_step, RecursionState};
use super::ucb::Ucb;
use crate::env::FeedbackMode;
use crate::schedule::{self, PullCounters, SessionPull};
use crate::stats::{self, ConfidenceParams, EstimatorState};

/// Constants every player knows in advance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Globals {
    pub m: usize,
    pub k: usize,
    pub delta: f64,
    pub mode: FeedbackMode,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PlayerOptions {
    pub trace: bool,
    /// Player 0 never signals; used to exercise the listener fallback.
    pub silent_coordinator: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Explore,
    Signal,
    Rounds,
    Block,
    Probe,
    Fixed,
    Ucb,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Trigger { arm: usize, n: u64, candidates: Vec<usize> },
    Checkpoint { n: u64, level: i32 },
    Postpone { n: u64 },
    SignalSent { arm: usize, cap: usize, w: u64, sessions: u64 },
    Listening { candidates: Vec<usize>, w: u64 },
    SignalDetected { arm: usize, cap: usize, w: u64 },
    NoSignal { rounds: u32 },
    UcbFallback { arms: Vec<usize> },
    Partition { top: Vec<usize> },
    StartSignal,
    FrameDecoded { arms: Vec<usize> },
    SpuriousStart,
    GammaDigit { digit: u8, gamma: Option<u32> },
    CapacityProbe { arms: Vec<usize>, sessions: u64 },
    Capacities { arms: Vec<usize>, caps: Vec<usize> },
    Recursion { epoch: u32, active: Vec<usize>, arms: Vec<usize>, fixed: Vec<usize> },
    Settled { arm: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Event {
    pub t: u64,
    pub player: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Group-schedule tags of the pull about to be made (zeros outside grouped sessions).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StepTag {
    pub psi: usize,
    pub pass: u8,
    pub full: bool,
}

/// Compared across players by the harness; equal for all players in sync.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyncKey {
    pub epoch: u32,
    pub n1: u64,
    pub blocks: u64,
    pub stage: u8,
}

#[derive(Clone, Copy, Debug)]
enum Info {
    Explore(SessionPull),
    Round,
    Probe { psi: usize, full: bool },
    Block { listen: bool },
    Idle,
}

#[derive(Clone, Copy, Debug)]
struct Step {
    arm: usize,
    info: Info,
}

#[derive(Debug)]
enum Steps {
    List(Vec<Step>),
    Repeat(Step, u64),
}

#[derive(Debug)]
struct Segment {
    steps: Steps,
    pos: u64,
    heard: Vec<f64>,
}

impl Segment {
    fn new(steps: Steps) -> Self {
        Self {
            steps,
            pos: 0,
            heard: Vec::new(),
        }
    }

    fn len(&self) -> u64 {
        match &self.steps {
            Steps::List(v) => v.len() as u64,
            Steps::Repeat(_, n) => *n,
        }
    }

    fn current(&self) -> Step {
        match &self.steps {
            Steps::List(v) => v[self.pos as usize],
            Steps::Repeat(s, _) => *s,
        }
    }
}

#[derive(Debug)]
enum Wait {
    Explore,
    SkipNext,
    Comm,
    Listen,
    Signaling { arm: usize, cap: usize, w: u64 },
    /// Coordinator with nothing to send, waiting for the last listener window
    /// to close before leaving the schedule.
    Drain { until: u64 },
}

#[derive(Debug)]
struct Cand {
    arm: usize,
    cap: usize,
    d: u64,
    seen: u64,
    zero: bool,
    sum: f64,
}

#[derive(Debug)]
struct Window {
    w: u64,
    start: u64,
    sessions: u64,
    cands: Vec<Cand>,
    buffer: Vec<(usize, usize, f64)>,
}

#[derive(Debug)]
struct One {
    session: u64,
    n1: u64,
    level: Option<i32>,
    counters: PullCounters,
    cands: Vec<usize>,
    wait: Wait,
    no_signal: u32,
    window: Option<Window>,
}

#[derive(Debug)]
enum Sub {
    Rounds,
    Test,
    Frame(Vec<bool>),
    Gamma {
        top: Vec<usize>,
        bits: Vec<bool>,
        b: f64,
        own: Option<u32>,
    },
    Probe {
        top: Vec<usize>,
        list: Vec<usize>,
        sessions: u64,
        done: u64,
        est: EstimatorState,
    },
    Outcome {
        top: Vec<usize>,
        next: Option<RecursionState>,
        bits: Vec<bool>,
    },
}

#[derive(Debug)]
struct Two {
    layout: BlockLayout,
    rec: RecursionState,
    known: Vec<Option<usize>>,
    n1: u64,
    level: Option<i32>,
    list: Vec<usize>,
    step: u64,
    vtop: Option<Vec<usize>>,
    awaiting: Option<Vec<usize>>,
    sub: Sub,
    blocks: u64,
}

#[derive(Debug)]
enum Stage {
    One(Box<One>),
    Two(Box<Two>),
    Ucb(Ucb),
    Settled(usize),
}

#[derive(Debug)]
pub struct Player {
    id: usize,
    gl: Globals,
    params: ConfidenceParams,
    opts: PlayerOptions,
    t: u64,
    est: EstimatorState,
    stage: Stage,
    seg: Segment,
    last_arm: usize,
    events: Vec<Event>,
    updates: Vec<(usize, usize)>,
    trigger: Option<(usize, u64)>,
    comm: Option<(usize, u64)>,
    epochs: u32,
}

/// Candidates around the triggering arm: estimates at least `ratio` times its estimate.
fn candidates(mu: &[f64], trig: usize, ratio: f64) -> Vec<usize> {
    let thr = ratio * mu[trig];
    (0..mu.len()).filter(|&a| mu[a] >= thr - 1e-12).collect()
}

pub fn coordinator_candidates(mu: &[f64], trig: usize) -> Vec<usize> {
    candidates(mu, trig, 3.0 / 5.0)
}

pub fn listener_candidates(mu: &[f64], trig: usize) -> Vec<usize> {
    candidates(mu, trig, 9.0 / 25.0)
}

/// Sessions player 0 must sit on an arm of capacity `cap` so that every
/// listener collects `w` sensitive pulls, starting at session `s0`.
/// A pull is sensitive when the listener's group has exactly `cap` members
/// and does not contain player 0.
pub fn signal_sessions(m: usize, cap: usize, w: u64, s0: u64) -> Option<u64> {
    if m < 2 {
        return Some(0);
    }
    let players: Vec<usize> = (0..m).collect();
    let per: Vec<Vec<u64>> = (0..m as u64)
        .map(|r| {
            let order = schedule::rotated(&players, r);
            let mut c = vec![0u64; m];
            for psi in 1..=m {
                for pass in 1..=2u8 {
                    let plan = schedule::grouped_rr_plan(psi, pass, &order).expect("psi in range");
                    for g in plan.groups.iter().filter(|g| g.len() == cap && !g.contains(&0)) {
                        for &q in g {
                            c[q] += 1;
                        }
                    }
                }
            }
            c
        })
        .collect();
    if (1..m).any(|q| per.iter().all(|c| c[q] == 0)) {
        return None;
    }
    let mut have = vec![0u64; m];
    let mut d = 0u64;
    loop {
        let r = ((s0 + d) % m as u64) as usize;
        for q in 1..m {
            have[q] += per[r][q];
        }
        d += 1;
        if (1..m).all(|q| have[q] >= w) {
            return Some(d);
        }
    }
}

fn argmax_by(arms: &[usize], mu: &[f64]) -> Option<usize> {
    arms.iter()
        .copied()
        .max_by(|&a, &b| mu[a].total_cmp(&mu[b]).then(b.cmp(&a)))
}

impl Player {
    pub fn new(id: usize, gl: Globals, opts: PlayerOptions) -> Self {
        let params = ConfidenceParams::new(gl.delta, gl.m, gl.k, gl.mode);
        let mut p = Self {
            id,
            gl,
            params,
            opts,
            t: 0,
            est: EstimatorState::new(gl.k, gl.m),
            stage: Stage::Settled(0),
            seg: Segment::new(Steps::Repeat(Step { arm: 0, info: Info::Idle }, 0)),
            last_arm: 0,
            events: Vec::new(),
            updates: Vec::new(),
            trigger: None,
            comm: None,
            epochs: 0,
        };
        if gl.m == 1 {
            p.stage = Stage::Ucb(Ucb::new((0..gl.k).collect()));
        } else {
            p.stage = Stage::One(Box::new(One {
                session: 0,
                n1: 0,
                level: None,
                counters: PullCounters::new(gl.m, gl.k),
                cands: Vec::new(),
                wait: Wait::Explore,
                no_signal: 0,
                window: None,
            }));
            p.begin();
        }
        p
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn params(&self) -> &ConfidenceParams {
        &self.params
    }

    fn emit(&mut self, kind: EventKind) {
        if self.opts.trace {
            self.events.push(Event {
                t: self.t,
                player: self.id,
                kind,
            });
        }
    }

    pub fn drain_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    /// (arm, ψ) entries of the main estimator touched since the last `clear_updates`.
    pub fn updates(&self) -> &[(usize, usize)] {
        &self.updates
    }

    pub fn clear_updates(&mut self) {
        self.updates.clear();
    }

    pub fn estimate(&self, arm: usize, psi: usize) -> (u64, f64) {
        (self.est.count(arm, psi), self.est.mean(arm, psi))
    }

    /// First inflated trigger: (arm, N).
    pub fn trigger_record(&self) -> Option<(usize, u64)> {
        self.trigger
    }

    /// Communication arm and test length once Phase 1 is over.
    pub fn comm(&self) -> Option<(usize, u64)> {
        self.comm
    }

    /// Recursion steps completed.
    pub fn epochs(&self) -> u32 {
        self.epochs
    }

    pub fn step_tag(&self) -> StepTag {
        if !matches!(self.stage, Stage::One(_) | Stage::Two(_)) || self.seg.pos >= self.seg.len() {
            return StepTag::default();
        }
        match self.seg.current().info {
            Info::Explore(sp) => StepTag {
                psi: sp.psi,
                pass: sp.pass,
                full: sp.full,
            },
            Info::Probe { psi, full } => StepTag { psi, pass: 0, full },
            Info::Round => StepTag {
                psi: 1,
                pass: 0,
                full: true,
            },
            _ => StepTag::default(),
        }
    }

    pub fn settled_arm(&self) -> Option<usize> {
        match self.stage {
            Stage::Settled(a) => Some(a),
            _ => None,
        }
    }

    pub fn in_ucb(&self) -> bool {
        matches!(self.stage, Stage::Ucb(_))
    }

    pub fn in_phase_two(&self) -> bool {
        matches!(self.stage, Stage::Two(_))
    }

    /// Capacities shared after Phase 1 and each capacity probe.
    pub fn known_capacities(&self) -> Option<Vec<Option<usize>>> {
        match &self.stage {
            Stage::Two(two) => Some(two.known.clone()),
            _ => None,
        }
    }

    pub fn recursion(&self) -> Option<&RecursionState> {
        match &self.stage {
            Stage::Two(two) => Some(&two.rec),
            _ => None,
        }
    }

    pub fn sync_key(&self) -> Option<SyncKey> {
        let Stage::Two(two) = &self.stage else {
            return None;
        };
        let stage = match two.sub {
            Sub::Rounds => 0,
            Sub::Probe { .. } => 2,
            _ => 1,
        };
        Some(SyncKey {
            epoch: two.rec.epoch,
            n1: two.n1,
            blocks: two.blocks,
            stage,
        })
    }

    pub fn phase(&self) -> Phase {
        match &self.stage {
            Stage::One(one) => match one.wait {
                Wait::Signaling { .. } => Phase::Signal,
                _ => Phase::Explore,
            },
            Stage::Two(two) => match two.sub {
                Sub::Rounds => Phase::Rounds,
                Sub::Probe { .. } => Phase::Probe,
                _ => Phase::Block,
            },
            Stage::Ucb(_) => Phase::Ucb,
            Stage::Settled(_) => Phase::Fixed,
        }
    }

    pub fn act(&mut self) -> usize {
        let arm = match &self.stage {
            Stage::Ucb(u) => u.choose(&self.params),
            Stage::Settled(a) => *a,
            _ => self.seg.current().arm,
        };
        self.last_arm = arm;
        arm
    }

    pub fn observe(&mut self, reward: f64) {
        self.t += 1;
        match &mut self.stage {
            Stage::Ucb(u) => {
                u.update(self.last_arm, reward);
                return;
            }
            Stage::Settled(_) => return,
            _ => {}
        }
        let step = self.seg.current();
        self.on_step(step, reward);
        self.seg.pos += 1;
        if self.seg.pos >= self.seg.len() {
            self.finish();
            if matches!(self.stage, Stage::One(_) | Stage::Two(_)) {
                self.begin();
            }
        }
    }

    fn push_est(&mut self, arm: usize, psi: usize, r: f64) {
        self.est.push(arm, psi, r);
        self.updates.push((arm, psi));
    }

    fn on_step(&mut self, step: Step, r: f64) {
        match step.info {
            Info::Explore(sp) => {
                let Stage::One(one) = &mut self.stage else {
                    return;
                };
                if let Some(win) = &mut one.window {
                    if sp.full {
                        win.buffer.push((sp.arm, sp.psi, r));
                    }
                    for c in win.cands.iter_mut() {
                        if c.arm == sp.arm && sp.group_size == c.cap && !sp.with_lead && c.seen < win.w {
                            c.seen += 1;
                            c.sum += r;
                            if r > 0.0 {
                                c.zero = false;
                            }
                        }
                    }
                } else if sp.full {
                    self.push_est(sp.arm, sp.psi, r);
                }
            }
            Info::Round => {
                let counted = match &self.stage {
                    Stage::Two(two) => two.rec.arms.contains(&step.arm),
                    _ => false,
                };
                if counted {
                    self.push_est(step.arm, 1, r);
                }
            }
            Info::Probe { psi, full } => {
                if let Stage::Two(two) = &mut self.stage {
                    if let Sub::Probe { top, est, .. } = &mut two.sub {
                        if full && top.contains(&step.arm) {
                            est.push(step.arm, psi, r);
                        }
                    }
                }
            }
            Info::Block { listen } => {
                if listen {
                    self.seg.heard.push(r);
                }
            }
            Info::Idle => {}
        }
    }

    /// Build the segment for the current state.
    fn begin(&mut self) {
        let id = self.id;
        let steps = match &self.stage {
            Stage::One(one) => match one.wait {
                Wait::Signaling { .. } => return,
                _ => {
                    let players: Vec<usize> = (0..self.gl.m).collect();
                    let arms: Vec<usize> = (0..self.gl.k).collect();
                    Steps::List(
                        schedule::session_pulls(&players, &arms, one.session, id)
                            .into_iter()
                            .map(|sp| Step {
                                arm: sp.arm,
                                info: Info::Explore(sp),
                            })
                            .collect(),
                    )
                }
            },
            Stage::Two(two) => {
                let mine = two.rec.assignment[id];
                match &two.sub {
                    Sub::Rounds => {
                        let n = two.list.len() as u64;
                        match mine {
                            Some(a) => Steps::Repeat(Step { arm: a, info: Info::Idle }, n),
                            None => {
                                let rank = two.rec.active.iter().position(|&p| p == id).expect("active");
                                Steps::List(
                                    (0..n)
                                        .map(|s| Step {
                                            arm: two.list[((rank as u64 + two.step + s) % n) as usize],
                                            info: Info::Round,
                                        })
                                        .collect(),
                                )
                            }
                        }
                    }
                    Sub::Probe {
                        list, sessions, done, ..
                    } => match mine {
                        Some(a) => {
                            let len = sessions * schedule::session_len(two.rec.m(), list.len()) as u64;
                            Steps::Repeat(Step { arm: a, info: Info::Idle }, len)
                        }
                        None => Steps::List(
                            schedule::session_pulls(&two.rec.active, list, *done, id)
                                .into_iter()
                                .map(|sp| Step {
                                    arm: sp.arm,
                                    info: Info::Probe {
                                        psi: sp.psi,
                                        full: sp.full,
                                    },
                                })
                                .collect(),
                        ),
                    },
                    _ => {
                        let bit = self.sent_bit(two);
                        let window = two.layout.listen_window(id);
                        Steps::List(
                            (0..two.layout.len())
                                .map(|s| Step {
                                    arm: two.layout.pull(id, s, bit),
                                    info: Info::Block {
                                        listen: window.as_ref().is_some_and(|w| w.contains(&s)),
                                    },
                                })
                                .collect(),
                        )
                    }
                }
            }
            _ => return,
        };
        self.seg = Segment::new(steps);
    }

    /// Bit player 0 transmits in the current block.
    fn sent_bit(&self, two: &Two) -> bool {
        if self.id != 0 {
            return false;
        }
        match &two.sub {
            Sub::Test => two.vtop.is_some(),
            Sub::Frame(bits) => two.vtop.as_ref().is_some_and(|v| v.contains(&bits.len())),
            Sub::Gamma { bits, own, .. } => {
                let d = own.map_or(POSTPONE, |g| (g % 10) as u8);
                codec::encode_digit(d).bits[bits.len()]
            }
            Sub::Outcome { next, bits, .. } => {
                let code = next.as_ref().map_or(0, RecursionState::code);
                let width = codec::outcome_width(self.gl.m);
                codec::encode_value(code, width, codec::FrameKind::Outcome).bits[bits.len()]
            }
            _ => false,
        }
    }

    fn finish(&mut self) {
        match &self.stage {
            Stage::One(one) => match one.wait {
                Wait::Signaling { arm, cap, w } => {
                    let (n1, level) = (one.n1, one.level);
                    self.enter_two(arm, cap, w, n1, level);
                }
                _ => self.end_session(),
            },
            Stage::Two(two) => match two.sub {
                Sub::Rounds => self.end_round(),
                Sub::Probe { .. } => self.end_probe(),
                _ => self.end_block(),
            },
            _ => {}
        }
    }

    // ---- phase 1 ----

    fn mu1(&self) -> Vec<f64> {
        (0..self.gl.k).map(|a| self.est.mean(a, 1)).collect()
    }

    fn phase1_capacity(&self, arm: usize, n1: u64, counters: &PullCounters) -> Option<usize> {
        let gl = self.gl;
        let known = match gl.mode {
            FeedbackMode::HardSax => stats::capacity_known(
                counters.min_count(arm, 2),
                self.est.mean(arm, 1),
                self.params.b(n1),
                gl.delta,
                gl.m,
                gl.k,
            ),
            FeedbackMode::AggregateSoft => true,
        };
        if !known {
            return None;
        }
        stats::infer_capacity(&self.est.overload_flags(arm, gl.m, gl.mode, gl.m)).ok()
    }

    fn test_length(&self, n1: u64) -> Option<u64> {
        let b = self.params.b(n1);
        match self.gl.mode {
            FeedbackMode::HardSax => stats::omega(12, b, self.gl.delta, self.gl.k, self.gl.m).ok(),
            FeedbackMode::AggregateSoft => Some(stats::omega_prime(b, self.gl.delta, self.gl.k, self.gl.m)),
        }
    }

    fn end_session(&mut self) {
        let Stage::One(mut one) = std::mem::replace(&mut self.stage, Stage::Settled(0)) else {
            unreachable!()
        };
        let players: Vec<usize> = (0..self.gl.m).collect();
        one.session += 1;
        if let Some(win) = one.window.as_mut() {
            win.sessions += 1;
            let j = win.sessions;
            let mu = self.mu1();
            let mut hit = None;
            for c in win.cands.iter().filter(|c| c.d == j) {
                let signalled = match self.gl.mode {
                    FeedbackMode::HardSax => c.zero && c.seen >= win.w,
                    FeedbackMode::AggregateSoft => {
                        c.seen >= win.w
                            && c.sum / c.seen as f64 <= mu[c.arm] * (1.0 - 1.0 / (2.0 * self.gl.m as f64))
                    }
                };
                if signalled {
                    hit = Some((c.arm, c.cap));
                    break;
                }
            }
            let w = win.w;
            if let Some((arm, cap)) = hit {
                let (n1, level) = (one.n1, one.level);
                self.stage = Stage::One(one);
                self.emit(EventKind::SignalDetected { arm, cap, w });
                self.enter_two(arm, cap, w, n1, level);
                return;
            }
            let last = win.cands.iter().map(|c| c.d).max().unwrap_or(0);
            if j >= last {
                let win = one.window.take().expect("window");
                for (a, psi, r) in win.buffer {
                    self.push_est(a, psi, r);
                }
                for s in win.start..win.start + win.sessions {
                    one.counters.record_session(&players, s);
                    one.n1 += 2;
                }
                one.level = self.params.level(one.n1);
                one.no_signal += 1;
                let rounds = one.no_signal;
                self.stage = Stage::One(one);
                self.emit(EventKind::NoSignal { rounds });
                self.after_missed();
            } else {
                self.stage = Stage::One(one);
            }
            return;
        }

        one.counters.record_session(&players, one.session - 1);
        one.n1 += 2;
        let level = self.params.level(one.n1);
        let ckpt = level > one.level;
        one.level = level;
        let n1 = one.n1;
        self.stage = Stage::One(one);
        if ckpt {
            self.emit(EventKind::Checkpoint {
                n: n1,
                level: level.unwrap_or(0),
            });
        }
        self.phase1_boundary(ckpt);
    }

    fn one_mut(&mut self) -> &mut One {
        match &mut self.stage {
            Stage::One(one) => one,
            _ => unreachable!("phase 1 state expected"),
        }
    }

    fn phase1_boundary(&mut self, ckpt: bool) {
        let coordinator = self.id == 0;
        let n1 = self.one_mut().n1;
        match self.one_mut().wait {
            Wait::Explore => {
                let mu = self.mu1();
                let fired: Vec<usize> = (0..self.gl.k).filter(|&a| self.params.trigger(mu[a], n1)).collect();
                let Some(arm) = argmax_by(&fired, &mu) else {
                    return;
                };
                let cands = if coordinator {
                    coordinator_candidates(&mu, arm)
                } else {
                    listener_candidates(&mu, arm)
                };
                self.trigger = Some((arm, n1));
                self.emit(EventKind::Trigger {
                    arm,
                    n: n1,
                    candidates: cands.clone(),
                });
                let one = self.one_mut();
                one.cands = cands;
                if coordinator {
                    one.wait = if ckpt { Wait::Comm } else { Wait::SkipNext };
                    if ckpt {
                        self.count_skipped(n1);
                    }
                } else {
                    one.wait = Wait::Listen;
                    if ckpt {
                        self.start_listening();
                    }
                }
            }
            Wait::SkipNext => {
                if ckpt {
                    self.one_mut().wait = Wait::Comm;
                    self.count_skipped(n1);
                }
            }
            Wait::Comm => {
                if ckpt {
                    self.try_signal();
                }
            }
            Wait::Listen => {
                if ckpt {
                    self.start_listening();
                }
            }
            Wait::Signaling { .. } => {}
            Wait::Drain { until } => {
                if self.one_mut().session >= until {
                    let arms = self.one_mut().cands.clone();
                    self.to_ucb(arms);
                }
            }
        }
    }

    // listeners count the checkpoint the coordinator skips as silent
    fn count_skipped(&mut self, n1: u64) {
        if self.radius_ok(n1) {
            self.one_mut().no_signal += 1;
        }
    }

    fn radius_ok(&self, n1: u64) -> bool {
        self.gl.mode == FeedbackMode::AggregateSoft || 12.0 * self.params.b(n1) < 1.0
    }

    fn known_candidates(&self) -> Vec<(usize, usize)> {
        let Stage::One(one) = &self.stage else {
            return Vec::new();
        };
        one.cands
            .iter()
            .filter_map(|&a| self.phase1_capacity(a, one.n1, &one.counters).map(|c| (a, c)))
            .filter(|&(_, c)| c < self.gl.m && c >= 1)
            .collect()
    }

    fn try_signal(&mut self) {
        if self.opts.silent_coordinator {
            return;
        }
        let n1 = self.one_mut().n1;
        if !self.radius_ok(n1) {
            self.emit(EventKind::Postpone { n: n1 });
            return;
        }
        let known = self.known_candidates();
        let mu = self.mu1();
        let arms: Vec<usize> = known.iter().map(|&(a, _)| a).collect();
        let choice = argmax_by(&arms, &mu).and_then(|arm| {
            let cap = known.iter().find(|&&(a, _)| a == arm).expect("present").1;
            let w = self.test_length(n1)?;
            let d = signal_sessions(self.gl.m, cap, w, self.one_mut().session)?;
            Some((arm, cap, w, d))
        });
        match choice {
            Some((arm, cap, w, d)) => {
                let len = d * schedule::session_len(self.gl.m, self.gl.k) as u64;
                self.emit(EventKind::SignalSent {
                    arm,
                    cap,
                    w,
                    sessions: d,
                });
                self.one_mut().wait = Wait::Signaling { arm, cap, w };
                self.seg = Segment::new(Steps::Repeat(Step { arm, info: Info::Idle }, len));
            }
            None => {
                // stay on the schedule so listeners read no false signal,
                // and leave together with them after three silent checkpoints
                let s0 = self.one_mut().session;
                let tail = self.test_length(n1).map_or(0, |w| {
                    (1..self.gl.m)
                        .filter_map(|c| signal_sessions(self.gl.m, c, w, s0))
                        .max()
                        .unwrap_or(0)
                });
                let one = self.one_mut();
                one.no_signal += 1;
                let rounds = one.no_signal;
                if rounds >= 3 {
                    one.wait = Wait::Drain { until: s0 + tail };
                }
                self.emit(EventKind::NoSignal { rounds });
                if rounds >= 3 && tail == 0 {
                    let arms = self.one_mut().cands.clone();
                    self.to_ucb(arms);
                }
            }
        }
    }

    fn start_listening(&mut self) {
        let n1 = self.one_mut().n1;
        if !self.radius_ok(n1) {
            self.emit(EventKind::Postpone { n: n1 });
            return;
        }
        let known = self.known_candidates();
        let w = self.test_length(n1);
        let s0 = self.one_mut().session;
        let cands: Vec<Cand> = match w {
            Some(w) => known
                .iter()
                .filter_map(|&(arm, cap)| {
                    signal_sessions(self.gl.m, cap, w, s0).map(|d| Cand {
                        arm,
                        cap,
                        d,
                        seen: 0,
                        zero: true,
                        sum: 0.0,
                    })
                })
                .collect(),
            None => Vec::new(),
        };
        if cands.is_empty() {
            let one = self.one_mut();
            one.no_signal += 1;
            let rounds = one.no_signal;
            self.emit(EventKind::NoSignal { rounds });
            self.after_missed();
            return;
        }
        let w = w.expect("checked above");
        self.emit(EventKind::Listening {
            candidates: cands.iter().map(|c| c.arm).collect(),
            w,
        });
        self.one_mut().window = Some(Window {
            w,
            start: s0,
            sessions: 0,
            cands,
            buffer: Vec::new(),
        });
    }

    fn after_missed(&mut self) {
        let one = self.one_mut();
        if one.no_signal >= 3 {
            let arms = one.cands.clone();
            self.to_ucb(arms);
        }
    }

    fn to_ucb(&mut self, arms: Vec<usize>) {
        self.emit(EventKind::UcbFallback { arms: arms.clone() });
        self.stage = Stage::Ucb(Ucb::new(arms));
    }

    // ---- phase 2 ----

    fn round_list(rec: &RecursionState, k: usize) -> Vec<usize> {
        let len = rec.arms.len().max(rec.m());
        let parking = (0..k).filter(|a| !rec.arms.contains(a) && !rec.fixed.contains(a));
        rec.arms.iter().copied().chain(parking).take(len).collect()
    }

    fn enter_two(&mut self, arm: usize, cap: usize, w: u64, n1: u64, level: Option<i32>) {
        let gl = self.gl;
        self.comm = Some((arm, w));
        let rec = RecursionState::new(gl.m, (0..gl.k).collect());
        let mut known = vec![None; gl.k];
        known[arm] = Some(cap);
        let list = Self::round_list(&rec, gl.k);
        self.stage = Stage::Two(Box::new(Two {
            layout: BlockLayout::new(gl.m, gl.k, arm, cap, w),
            rec,
            known,
            n1,
            level,
            list,
            step: 0,
            vtop: None,
            awaiting: None,
            sub: Sub::Rounds,
            blocks: 0,
        }));
    }

    fn two_mut(&mut self) -> &mut Two {
        match &mut self.stage {
            Stage::Two(two) => two,
            _ => unreachable!("phase 2 state expected"),
        }
    }

    fn end_round(&mut self) {
        let coordinator = self.id == 0;
        let mu = self.mu1();
        let params = self.params;
        let two = self.two_mut();
        two.step += two.list.len() as u64;
        two.n1 += 1;
        let level = params.level(two.n1);
        let ckpt = level > two.level;
        two.level = level;
        let n1 = two.n1;
        let mut split = None;
        // a lone active player has nobody to tell: it takes the best arm as
        // soon as that arm separates from the rest
        if two.rec.active.len() == 1 {
            let radius = vec![params.b(n1); mu.len()];
            let graph = ConnectivityGraph::build(&two.rec.arms, &mu, &radius);
            if let Some((top, _)) = graph.partition(&mu).filter(|(top, _)| top.len() == 1) {
                self.emit(EventKind::Partition { top: top.clone() });
                self.stage = Stage::Settled(top[0]);
                self.emit(EventKind::Settled { arm: top[0] });
            }
            return;
        }
        if coordinator && two.vtop.is_none() && two.awaiting.is_none() {
            let radius = vec![params.b(n1); mu.len()];
            let graph = ConnectivityGraph::build(&two.rec.arms, &mu, &radius);
            if let Some((top, _)) = graph.partition(&mu) {
                two.vtop = Some(top.clone());
                split = Some(top);
            }
        }
        if let Some(top) = split {
            self.emit(EventKind::Partition { top });
        }
        if ckpt {
            self.emit(EventKind::Checkpoint {
                n: n1,
                level: level.unwrap_or(0),
            });
            let awaiting = self.two_mut().awaiting.take();
            match awaiting {
                Some(top) => self.start_gamma(top),
                None => self.two_mut().sub = Sub::Test,
            }
        }
    }

    fn start_gamma(&mut self, top: Vec<usize>) {
        let mu = self.mu1();
        let n1 = self.two_mut().n1;
        let b = self.params.b(n1);
        let gap = top.iter().map(|&a| mu[a] - b).fold(f64::INFINITY, f64::min);
        let own = stats::largest_gamma(gap, b);
        self.two_mut().sub = Sub::Gamma {
            top,
            bits: Vec::new(),
            b,
            own,
        };
    }

    fn end_block(&mut self) {
        let bit = if self.id == 0 {
            let Stage::Two(two) = &self.stage else { unreachable!() };
            self.sent_bit(two)
        } else {
            let (comm_arm, _) = self.comm.expect("comm arm set");
            codec::read_bit(&self.seg.heard, self.gl.mode, self.est.mean(comm_arm, 1), self.gl.m)
        };
        let k = self.gl.k;
        let two = self.two_mut();
        two.blocks += 1;
        let sub = std::mem::replace(&mut two.sub, Sub::Rounds);
        match sub {
            Sub::Test => {
                if bit {
                    self.two_mut().sub = Sub::Frame(Vec::new());
                    self.emit(EventKind::StartSignal);
                }
            }
            Sub::Frame(mut bits) => {
                bits.push(bit);
                if bits.len() < k {
                    self.two_mut().sub = Sub::Frame(bits);
                    return;
                }
                let arms = codec::decode_arms(&bits);
                let two = self.two_mut();
                let valid =
                    !arms.is_empty() && arms.len() < two.rec.arms.len() && arms.iter().all(|a| two.rec.arms.contains(a));
                if !valid {
                    self.emit(EventKind::SpuriousStart);
                    return;
                }
                self.emit(EventKind::FrameDecoded { arms: arms.clone() });
                let two = self.two_mut();
                if arms.iter().any(|&a| two.known[a].is_none()) {
                    self.start_gamma(arms);
                } else {
                    let m = two.rec.m();
                    let caps = arms.iter().map(|&a| two.known[a].expect("known").min(m)).collect();
                    self.resolve(arms, caps);
                }
            }
            Sub::Gamma { top, mut bits, b, own } => {
                bits.push(bit);
                if bits.len() < 4 {
                    self.two_mut().sub = Sub::Gamma { top, bits, b, own };
                    return;
                }
                let digit = codec::decode_value(&bits) as u8;
                let gamma = (digit <= 9).then(|| codec::reconstruct_gamma(digit, own.unwrap_or(digit as u32)));
                self.emit(EventKind::GammaDigit { digit, gamma });
                if digit == POSTPONE {
                    self.two_mut().awaiting = Some(top);
                    return;
                }
                let gl = self.gl;
                let sessions = match (gl.mode, gamma) {
                    (FeedbackMode::HardSax, Some(g)) => stats::omega(g, b, gl.delta, gl.k, gl.m).ok(),
                    (FeedbackMode::AggregateSoft, Some(_)) => Some(stats::omega_prime(b, gl.delta, gl.k, gl.m)),
                    _ => None,
                };
                let Some(sessions) = sessions else {
                    self.emit(EventKind::SpuriousStart);
                    return;
                };
                self.start_probe(top, sessions);
            }
            Sub::Outcome { top, next, mut bits } => {
                bits.push(bit);
                let width = codec::outcome_width(self.gl.m);
                if bits.len() < width {
                    self.two_mut().sub = Sub::Outcome { top, next, bits };
                    return;
                }
                let code = codec::decode_value(&bits);
                let next = next.unwrap_or_else(|| apply_code(&self.two_mut().rec, &top, code));
                self.apply(next);
            }
            Sub::Rounds | Sub::Probe { .. } => unreachable!("not a block"),
        }
    }

    fn start_probe(&mut self, top: Vec<usize>, sessions: u64) {
        let k = self.gl.k;
        let two = self.two_mut();
        let m = two.rec.m();
        let len = top.len().max(m);
        let parking = (0..k).filter(|a| !top.contains(a) && !two.rec.fixed.contains(a));
        let list: Vec<usize> = top.iter().copied().chain(parking).take(len).collect();
        self.emit(EventKind::CapacityProbe {
            arms: top.clone(),
            sessions,
        });
        self.two_mut().sub = Sub::Probe {
            top,
            list,
            sessions,
            done: 0,
            est: EstimatorState::new(k, m),
        };
    }

    fn end_probe(&mut self) {
        let id = self.id;
        let gl = self.gl;
        let two = self.two_mut();
        let committed = two.rec.assignment[id].is_some();
        let m = two.rec.m();
        let Sub::Probe {
            top,
            sessions,
            done,
            est,
            ..
        } = &mut two.sub
        else {
            unreachable!()
        };
        *done = if committed { *sessions } else { *done + 1 };
        if *done < *sessions {
            return;
        }
        let top = top.clone();
        let mut caps = Vec::with_capacity(top.len());
        for &a in &top {
            let c = match two.known[a] {
                Some(c) => c,
                None if committed => 0,
                None => stats::infer_capacity(&est.overload_flags(a, m, gl.mode, gl.m)).unwrap_or(0),
            };
            two.known[a] = Some(c);
            caps.push(c.min(m));
        }
        if !committed {
            self.emit(EventKind::Capacities {
                arms: top.clone(),
                caps: caps.clone(),
            });
        }
        self.two_mut().sub = Sub::Rounds;
        self.resolve(top, caps);
    }

    fn resolve(&mut self, top: Vec<usize>, caps: Vec<usize>) {
        let id = self.id;
        let two = self.two_mut();
        let committed = two.rec.assignment[id].is_some();
        let next = (!committed).then(|| recursion_step(&two.rec, &top, &caps));
        if two.rec.fixed.is_empty() {
            self.apply(next.expect("everyone is active"));
        } else {
            two.sub = Sub::Outcome {
                top,
                next,
                bits: Vec::new(),
            };
        }
    }

    fn apply(&mut self, next: RecursionState) {
        let id = self.id;
        let k = self.gl.k;
        self.epochs += 1;
        self.emit(EventKind::Recursion {
            epoch: next.epoch,
            active: next.active.clone(),
            arms: next.arms.clone(),
            fixed: next.fixed.clone(),
        });
        let two = self.two_mut();
        if next.done {
            let arm = next.assignment[id]
                .or_else(|| two.rec.assignment[id])
                .unwrap_or(next.arms.first().copied().unwrap_or(0));
            self.stage = Stage::Settled(arm);
            self.emit(EventKind::Settled { arm });
            return;
        }
        // with one active player left no further frame is sent
        if next.active.len() == 1 {
            if let Some(arm) = next.assignment[id] {
                self.stage = Stage::Settled(arm);
                self.emit(EventKind::Settled { arm });
                return;
            }
        }
        two.list = Self::round_list(&next, k);
        two.rec = next;
        two.step = 0;
        two.vtop = None;
        two.awaiting = None;
        two.sub = Sub::Rounds;
    }
}
