//! Deterministic round-robin schedules. Player and arm indices are 0-based
//! internally; only `simple_rr_arm` uses the 1-based convention.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("group size {psi} exceeds {players} players")]
    GroupTooLarge { psi: usize, players: usize },
    #[error("group size must be positive")]
    ZeroGroup,
}

/// `[(p + i - 1) mod K] + 1`, all 1-based.
pub fn simple_rr_arm(p: usize, i: usize, k: usize) -> usize {
    (p + i - 1) % k + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SchedulePosition {
    pub session_index: u64,
    pub psi: usize,
    pub pass: u8,
    pub round_in_pass: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupPlan {
    pub psi: usize,
    pub groups: Vec<Vec<usize>>,
}

impl GroupPlan {
    pub fn group_of(&self, player: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&player))
    }

    pub fn is_full(&self, g: usize) -> bool {
        self.groups[g].len() == self.psi
    }
}

/// Pass 1 cuts `players` into consecutive blocks in the given order, pass 2
/// cuts the reversed order, so the leftover group of pass 1 sits inside full
/// groups in pass 2.
pub fn grouped_rr_plan(psi: usize, pass: u8, players: &[usize]) -> Result<GroupPlan, ScheduleError> {
    if psi == 0 {
        return Err(ScheduleError::ZeroGroup);
    }
    if psi > players.len() {
        return Err(ScheduleError::GroupTooLarge {
            psi,
            players: players.len(),
        });
    }
    let order: Vec<usize> = if pass == 1 {
        players.to_vec()
    } else {
        players.iter().rev().copied().collect()
    };
    Ok(GroupPlan {
        psi,
        groups: order.chunks(psi).map(<[usize]>::to_vec).collect(),
    })
}

/// Player order used by session `s`: the active list rotated left by `s mod m`.
pub fn rotated(players: &[usize], session: u64) -> Vec<usize> {
    let m = players.len();
    let r = (session % m as u64) as usize;
    players[r..].iter().chain(&players[..r]).copied().collect()
}

pub fn session_len(m: usize, arms: usize) -> usize {
    2 * m * arms
}

pub fn session_plan(m: usize, arms: usize) -> Vec<SchedulePosition> {
    let mut out = Vec::with_capacity(session_len(m, arms));
    for psi in 1..=m {
        for pass in 1..=2u8 {
            for round in 0..arms {
                out.push(SchedulePosition {
                    session_index: 0,
                    psi,
                    pass,
                    round_in_pass: round,
                });
            }
        }
    }
    out
}

/// What one player does at one step of a grouped session.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionPull {
    pub arm: usize,
    pub psi: usize,
    pub pass: u8,
    pub group_size: usize,
    pub full: bool,
    /// Group contains player 0.
    pub with_lead: bool,
}

/// The full step sequence of `me` for session `session` over `arms`.
/// Group `j` in round `i` plays `arms[(j + i) % len]`.
pub fn session_pulls(players: &[usize], arms: &[usize], session: u64, me: usize) -> Vec<SessionPull> {
    let m = players.len();
    let r = (session % m as u64) as usize;
    let at = |p: usize| {
        let i = players.iter().position(|&q| q == p).expect("player is active");
        (i + m - r) % m
    };
    let mine = at(me);
    let lead = players.contains(&0).then(|| at(0));
    let mut out = Vec::with_capacity(session_len(m, arms.len()));
    for psi in 1..=m {
        for pass in 1..=2u8 {
            // index in the cut order: ascending on pass 1, descending on pass 2
            let idx = |i: usize| if pass == 1 { i } else { m - 1 - i };
            let g = idx(mine) / psi;
            let size = psi.min(m - g * psi);
            let with_lead = lead.is_some_and(|l| idx(l) / psi == g);
            for round in 0..arms.len() {
                out.push(SessionPull {
                    arm: arms[(g + round) % arms.len()],
                    psi,
                    pass,
                    group_size: size,
                    full: size == psi,
                    with_lead,
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PullCounters {
    m: usize,
    k: usize,
    counts: Vec<u64>,
}

impl PullCounters {
    pub fn new(m: usize, k: usize) -> Self {
        Self {
            m,
            k,
            counts: vec![0; m * k * m],
        }
    }

    fn idx(&self, p: usize, arm: usize, psi: usize) -> usize {
        (p * self.k + arm) * self.m + (psi - 1)
    }

    pub fn record_pull(&mut self, p: usize, arm: usize, psi: usize, full: bool) {
        if full {
            let i = self.idx(p, arm, psi);
            self.counts[i] += 1;
        }
    }

    pub fn count(&self, p: usize, arm: usize, psi: usize) -> u64 {
        self.counts[self.idx(p, arm, psi)]
    }

    /// N(arm, psi) = min over players.
    pub fn min_count(&self, arm: usize, psi: usize) -> u64 {
        (0..self.m).map(|p| self.count(p, arm, psi)).min().unwrap_or(0)
    }

    /// Bulk update for one whole session over all arms.
    pub fn record_session(&mut self, players: &[usize], session: u64) {
        let m = players.len();
        let r = (session % m as u64) as usize;
        for psi in 1..=m {
            // positions below this cut sit in full groups
            let full_upto = m / psi * psi;
            for pass in 1..=2u8 {
                for (i, &p) in players.iter().enumerate() {
                    let pos = (i + m - r) % m;
                    let idx = if pass == 1 { pos } else { m - 1 - pos };
                    if idx < full_upto {
                        for arm in 0..self.k {
                            self.record_pull(p, arm, psi, true);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rr_formula() {
        assert_eq!(simple_rr_arm(2, 3, 5), 5);
        assert_eq!(simple_rr_arm(3, 4, 5), 2);
        // the literal formula starts player 1 on arm 2
        assert_eq!(simple_rr_arm(1, 1, 5), 2);
    }

    #[test]
    fn pair_grouping() {
        let p1 = grouped_rr_plan(2, 1, &[1, 2, 3]).unwrap();
        assert_eq!(p1.groups, vec![vec![1, 2], vec![3]]);
        let p2 = grouped_rr_plan(2, 2, &[1, 2, 3]).unwrap();
        assert_eq!(p2.groups, vec![vec![3, 2], vec![1]]);
        assert!(grouped_rr_plan(4, 1, &[1, 2, 3]).is_err());
    }

    #[test]
    fn singleton_groups() {
        let p = grouped_rr_plan(1, 1, &[0, 1, 2]).unwrap();
        assert_eq!(p.groups, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn plan_lengths() {
        assert_eq!(session_plan(1, 5).len(), 10);
        assert_eq!(session_plan(3, 5).len(), 30);
        assert_eq!(session_plan(2, 2).len(), 8);
    }

    #[test]
    fn small_group_not_counted() {
        let mut c = PullCounters::new(3, 2);
        c.record_pull(0, 1, 2, false);
        assert_eq!(c.count(0, 1, 2), 0);
        c.record_pull(0, 1, 2, true);
        assert_eq!(c.count(0, 1, 2), 1);
    }
}
