//! Bandit instances, reward sampling and the optimal-allocation oracle.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution as _};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    #[default]
    Bernoulli,
    PointMass,
    /// Beta(2μ, 2(1-μ)).
    Beta,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    #[default]
    HardSax,
    AggregateSoft,
}

impl fmt::Display for FeedbackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedbackMode::HardSax => "hard_sax",
            FeedbackMode::AggregateSoft => "aggregate_soft",
        })
    }
}

impl std::str::FromStr for FeedbackMode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hard_sax" => Ok(FeedbackMode::HardSax),
            "aggregate_soft" => Ok(FeedbackMode::AggregateSoft),
            other => Err(invalid(format!("unknown feedback mode `{other}`"))),
        }
    }
}

/// Either an explicit δ or the horizon-dependent default 1/(T²MK²).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum DeltaPolicy {
    Explicit(f64),
    #[default]
    TheoremDefault,
}

impl Serialize for DeltaPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            DeltaPolicy::Explicit(d) => s.serialize_f64(*d),
            DeltaPolicy::TheoremDefault => s.serialize_str("theorem_default"),
        }
    }
}

impl<'de> Deserialize<'de> for DeltaPolicy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(DeltaPolicy::Explicit(x)),
            Raw::Name(n) if n == "theorem_default" => Ok(DeltaPolicy::TheoremDefault),
            Raw::Name(n) => Err(serde::de::Error::custom(format!(
                "delta must be a number or \"theorem_default\", got `{n}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub mean: f64,
    pub capacity: usize,
    #[serde(default)]
    pub dist: Distribution,
}

impl ArmSpec {
    pub fn new(mean: f64, capacity: usize, dist: Distribution) -> Self {
        Self {
            mean,
            capacity,
            dist,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub arms: Vec<ArmSpec>,
    pub players: usize,
    pub horizon: u64,
    #[serde(default)]
    pub delta: DeltaPolicy,
    #[serde(default)]
    pub feedback_mode: FeedbackMode,
    #[serde(default)]
    pub seed: u64,
}

impl InstanceConfig {
    /// Shorthand used heavily in tests: one distribution for every arm.
    pub fn uniform(
        means: &[f64],
        caps: &[usize],
        dist: Distribution,
        players: usize,
        horizon: u64,
        delta: f64,
    ) -> Self {
        assert_eq!(means.len(), caps.len());
        Self {
            arms: means
                .iter()
                .zip(caps)
                .map(|(&m, &c)| ArmSpec::new(m, c, dist))
                .collect(),
            players,
            horizon,
            delta: DeltaPolicy::Explicit(delta),
            feedback_mode: FeedbackMode::HardSax,
            seed: 0,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: InstanceConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn k(&self) -> usize {
        self.arms.len()
    }

    pub fn means(&self) -> Vec<f64> {
        self.arms.iter().map(|a| a.mean).collect()
    }

    pub fn capacities(&self) -> Vec<usize> {
        self.arms.iter().map(|a| a.capacity).collect()
    }

    /// Resolved confidence parameter.
    pub fn delta(&self) -> f64 {
        match self.delta {
            DeltaPolicy::Explicit(d) => d,
            DeltaPolicy::TheoremDefault => {
                let t = self.horizon as f64;
                let k = self.k() as f64;
                1.0 / (t * t * self.players as f64 * k * k)
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let k = self.k();
        if self.players == 0 {
            return Err(invalid("players must be at least 1"));
        }
        if k < self.players {
            return Err(invalid(format!(
                "need at least as many arms as players ({k} < {})",
                self.players
            )));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon must be positive"));
        }
        for (i, a) in self.arms.iter().enumerate() {
            if !(0.0..=1.0).contains(&a.mean) {
                return Err(invalid(format!("arm {}: mean {} outside [0,1]", i + 1, a.mean)));
            }
            if a.capacity == 0 {
                return Err(invalid(format!("arm {}: capacity must be >= 1", i + 1)));
            }
        }
        for i in 0..k {
            for j in i + 1..k {
                if self.arms[i].mean == self.arms[j].mean {
                    return Err(invalid(format!(
                        "arms {} and {} share mean {}",
                        i + 1,
                        j + 1,
                        self.arms[i].mean
                    )));
                }
            }
        }
        let total: usize = self.arms.iter().map(|a| a.capacity).sum();
        if total < self.players {
            return Err(invalid(format!(
                "infeasible: total capacity {total} < {} players",
                self.players
            )));
        }
        if let DeltaPolicy::Explicit(d) = self.delta {
            if !(d > 0.0 && d < 0.5) {
                return Err(invalid(format!("delta {d} must lie in (0, 1/2)")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimalAllocation {
    pub v: usize,
    pub counts: Vec<usize>,
    pub value: f64,
}

/// Arms sorted by decreasing mean, ties to the lower index.
pub fn ranked_arms(means: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..means.len()).collect();
    idx.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    idx
}

pub fn optimal_allocation(inst: &InstanceConfig) -> Result<OptimalAllocation, ConfigError> {
    let means = inst.means();
    let mut left = inst.players;
    let mut counts = vec![0; inst.k()];
    let mut v = 0;
    for a in ranked_arms(&means) {
        if left == 0 {
            break;
        }
        let take = inst.arms[a].capacity.min(left);
        counts[a] = take;
        left -= take;
        v += 1;
    }
    if left > 0 {
        return Err(invalid("total capacity below player count"));
    }
    let value = counts.iter().zip(&means).map(|(&c, &m)| c as f64 * m).sum();
    Ok(OptimalAllocation { v, counts, value })
}

pub fn occupancy(profile: &[usize], k: usize) -> Vec<usize> {
    let mut occ = vec![0; k];
    for &a in profile {
        occ[a] += 1;
    }
    occ
}

fn count_on(profile: &[usize], arm: usize) -> usize {
    profile.iter().filter(|&&a| a == arm).count()
}

/// Expected collected reward of a profile.
pub fn profile_value(inst: &InstanceConfig, profile: &[usize]) -> f64 {
    let mut total = 0.0;
    for (a, arm) in inst.arms.iter().enumerate() {
        let o = count_on(profile, a);
        if o == 0 {
            continue;
        }
        total += match inst.feedback_mode {
            FeedbackMode::HardSax if o <= arm.capacity => arm.mean * o as f64,
            FeedbackMode::HardSax => 0.0,
            FeedbackMode::AggregateSoft => arm.mean * o.min(arm.capacity) as f64,
        };
    }
    total
}

pub fn step_regret(inst: &InstanceConfig, opt: &OptimalAllocation, profile: &[usize]) -> f64 {
    (opt.value - profile_value(inst, profile)).max(0.0)
}

fn draw(arm: &ArmSpec, key: u64) -> f64 {
    match arm.dist {
        Distribution::PointMass => arm.mean,
        Distribution::Bernoulli => {
            if rng::unit(key) < arm.mean {
                1.0
            } else {
                0.0
            }
        }
        Distribution::Beta => {
            if arm.mean <= 0.0 || arm.mean >= 1.0 {
                return arm.mean;
            }
            let beta = Beta::new(2.0 * arm.mean, 2.0 * (1.0 - arm.mean)).expect("valid shape");
            beta.sample(&mut ChaCha8Rng::seed_from_u64(key))
        }
    }
}

/// One round of feedback. Randomness is a pure function of (seed, t, player or arm slot),
/// so the result does not depend on call order.
pub fn sample_feedback(
    inst: &InstanceConfig,
    profile: &[usize],
    t: u64,
) -> Result<Vec<f64>, ConfigError> {
    let mut out = vec![0.0; profile.len()];
    sample_feedback_into(inst, profile, t, &mut out)?;
    Ok(out)
}

/// `sample_feedback` writing into a caller-owned buffer of length M.
pub fn sample_feedback_into(
    inst: &InstanceConfig,
    profile: &[usize],
    t: u64,
    out: &mut [f64],
) -> Result<(), ConfigError> {
    let k = inst.k();
    if profile.len() != inst.players || out.len() != inst.players {
        return Err(invalid(format!(
            "profile has {} entries for {} players",
            profile.len(),
            inst.players
        )));
    }
    if let Some(&bad) = profile.iter().find(|&&a| a >= k) {
        return Err(invalid(format!("arm index {} out of range", bad + 1)));
    }
    for (p, &a) in profile.iter().enumerate() {
        let arm = &inst.arms[a];
        let o = count_on(profile, a);
        out[p] = match inst.feedback_mode {
            FeedbackMode::HardSax if o <= arm.capacity => draw(arm, rng::key(inst.seed, p as u64, t, 0)),
            FeedbackMode::HardSax => 0.0,
            FeedbackMode::AggregateSoft => {
                let total: f64 = (0..o.min(arm.capacity))
                    .map(|j| draw(arm, rng::key(inst.seed, j as u64, t, 1 + a as u64)))
                    .sum();
                total / o as f64
            }
        };
    }
    Ok(())
}
