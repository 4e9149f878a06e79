//! Collision-coded frames and the layout of a signal testing block.

use serde::Serialize;

use crate::env::FeedbackMode;

/// Digit value that tells listeners to wait for the next checkpoint.
pub const POSTPONE: u8 = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    StartSignal,
    ArmSet,
    GammaDigit,
    Outcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MessageFrame {
    pub kind: FrameKind,
    pub bits: Vec<bool>,
}

pub fn encode_arms(subset: &[usize], k: usize) -> MessageFrame {
    let mut bits = vec![false; k];
    for &a in subset {
        bits[a] = true;
    }
    MessageFrame {
        kind: FrameKind::ArmSet,
        bits,
    }
}

pub fn decode_arms(bits: &[bool]) -> Vec<usize> {
    bits.iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i))
        .collect()
}

pub fn encode_value(v: usize, width: usize, kind: FrameKind) -> MessageFrame {
    MessageFrame {
        kind,
        bits: (0..width).rev().map(|i| (v >> i) & 1 == 1).collect(),
    }
}

pub fn decode_value(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Four bits, most significant first.
pub fn encode_digit(d: u8) -> MessageFrame {
    encode_value(d as usize, 4, FrameKind::GammaDigit)
}

pub fn outcome_width(m_total: usize) -> usize {
    (usize::BITS - m_total.leading_zeros()) as usize
}

/// Closest value to `own` ending in `digit`; ties go to the smaller one.
pub fn reconstruct_gamma(digit: u8, own: u32) -> u32 {
    let d = digit as i64;
    let own = own as i64;
    let base = own - own.rem_euclid(10) + d;
    [base - 10, base, base + 10]
        .into_iter()
        .filter(|&c| c >= 1)
        .min_by_key(|&c| ((c - own).abs(), c))
        .unwrap_or(d.max(1)) as u32
}

/// Decision of one listener from its own sub-block.
pub fn read_bit(rewards: &[f64], mode: FeedbackMode, mu_hat: f64, m_total: usize) -> bool {
    match mode {
        FeedbackMode::HardSax => rewards.iter().all(|&r| r == 0.0),
        FeedbackMode::AggregateSoft => {
            let mean = rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
            mean <= mu_hat * (1.0 - 1.0 / (2.0 * m_total as f64))
        }
    }
}

/// Who probes the communication arm in which sub-block, and where everyone
/// else parks meanwhile.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockLayout {
    pub comm_arm: usize,
    pub cap: usize,
    pub w: u64,
    pub groups: Vec<Vec<usize>>,
    primary: Vec<usize>,
    others: Vec<usize>,
    m_total: usize,
}

impl BlockLayout {
    pub fn new(m_total: usize, k: usize, comm_arm: usize, cap: usize, w: u64) -> Self {
        let listeners: Vec<usize> = (1..m_total).collect();
        let n = listeners.len();
        let g_count = n.div_ceil(cap);
        let groups: Vec<Vec<usize>> = (0..g_count)
            .map(|g| {
                let end = ((g + 1) * cap).min(n);
                let start = end.saturating_sub(cap);
                listeners[start..end].to_vec()
            })
            .collect();
        let mut primary = vec![usize::MAX; m_total];
        for (g, members) in groups.iter().enumerate() {
            for &p in members {
                if primary[p] == usize::MAX {
                    primary[p] = g;
                }
            }
        }
        Self {
            comm_arm,
            cap,
            w,
            groups,
            primary,
            others: (0..k).filter(|&a| a != comm_arm).collect(),
            m_total,
        }
    }

    pub fn len(&self) -> u64 {
        self.groups.len() as u64 * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Arm for `player` at `step` of the block. Player 0 probes when `bit` is set.
    pub fn pull(&self, player: usize, step: u64, bit: bool) -> usize {
        let g = (step / self.w) as usize;
        let s = step % self.w;
        let group = &self.groups[g];
        if player == 0 && bit {
            return self.comm_arm;
        }
        if player != 0 && group.contains(&player) {
            return self.comm_arm;
        }
        let rank = if player == 0 {
            0
        } else {
            1 + (1..player).filter(|q| !group.contains(q)).count()
        };
        self.others[(rank + s as usize) % self.others.len()]
    }

    /// Steps of the block a listener reads from.
    pub fn listen_window(&self, player: usize) -> Option<std::ops::Range<u64>> {
        if player == 0 || player >= self.m_total {
            return None;
        }
        let g = self.primary[player] as u64;
        Some(g * self.w..(g + 1) * self.w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_frame_example() {
        let f = encode_arms(&[0, 2], 4);
        assert_eq!(f.bits, vec![true, false, true, false]);
        assert_eq!(decode_arms(&f.bits), vec![0, 2]);
        assert!(decode_arms(&encode_arms(&[], 4).bits).is_empty());
    }

    #[test]
    fn digit_frame_example() {
        assert_eq!(encode_digit(9).bits, vec![true, false, false, true]);
        assert_eq!(decode_value(&encode_digit(POSTPONE).bits), 15);
    }

    #[test]
    fn gamma_reconstruction() {
        assert_eq!(reconstruct_gamma(9, 9), 9);
        assert_eq!(reconstruct_gamma(1, 19), 21);
        assert_eq!(reconstruct_gamma(7, 12), 7);
        assert_eq!(reconstruct_gamma(0, 3), 10);
    }

    #[test]
    fn layout_is_collision_free() {
        for m in 2..=8 {
            for k in m..=9 {
                for cap in 1..m {
                    let l = BlockLayout::new(m, k, k - 1, cap, 3);
                    for step in 0..l.len() {
                        let mut occ = vec![0; k];
                        for p in 0..m {
                            occ[l.pull(p, step, false)] += 1;
                        }
                        for (a, &o) in occ.iter().enumerate() {
                            if a == k - 1 {
                                assert_eq!(o, cap);
                            } else {
                                assert!(o <= 1);
                            }
                        }
                    }
                }
            }
        }
    }
}
