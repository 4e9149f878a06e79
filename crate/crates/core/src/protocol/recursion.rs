use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RecursionState {
    pub fixed: Vec<usize>,
    /// Final arm per player, once committed.
    pub assignment: Vec<Option<usize>>,
    pub active: Vec<usize>,
    pub arms: Vec<usize>,
    pub epoch: u32,
    pub done: bool,
}

impl RecursionState {
    pub fn new(m_total: usize, arms: Vec<usize>) -> Self {
        Self {
            fixed: Vec::new(),
            assignment: vec![None; m_total],
            active: (0..m_total).collect(),
            arms,
            epoch: 0,
            done: false,
        }
    }

    pub fn m(&self) -> usize {
        self.active.len()
    }

    /// Value broadcast to players that cannot see the new capacities:
    /// 0 when finished, otherwise the new number of active players.
    pub fn code(&self) -> usize {
        if self.done {
            0
        } else {
            self.active.len()
        }
    }

    fn fill(&mut self, players: &[usize], arms: &[usize], caps: &[usize]) {
        let mut slots = arms
            .iter()
            .zip(caps)
            .flat_map(|(&a, &c)| std::iter::repeat_n(a, c));
        for &p in players {
            // more players than slots only happens off the good event
            let a = slots.next().or(arms.last().copied()).expect("non-empty top set");
            self.assignment[p] = Some(a);
        }
    }

    fn settle_all_on(&mut self, arm: usize) {
        for p in self.active.clone() {
            self.assignment[p] = Some(arm);
        }
        self.done = true;
    }
}

/// One step of the recursive allocation. `top_caps[i]` is the capacity of
/// `top[i]`, already capped at the current number of active players.
pub fn recursion_step(st: &RecursionState, top: &[usize], top_caps: &[usize]) -> RecursionState {
    let mut next = st.clone();
    next.epoch += 1;
    let m = st.m();
    let c_top: usize = top_caps.iter().sum();
    if c_top <= m {
        if c_top == m {
            next.fill(&st.active, top, top_caps);
            next.fixed.extend_from_slice(top);
            next.done = true;
            return next;
        }
        // player 0 keeps coordinating, so commit listeners first
        let commit: Vec<usize> = st.active.iter().copied().filter(|&p| p != 0).take(c_top).collect();
        next.fill(&commit, top, top_caps);
        next.fixed.extend_from_slice(top);
        next.active.retain(|p| !commit.contains(p));
        next.arms.retain(|a| !top.contains(a));
        match next.arms.len() {
            0 => {
                let last = *top.last().expect("non-empty top set");
                next.settle_all_on(last);
            }
            1 => {
                let a = next.arms[0];
                next.settle_all_on(a);
            }
            _ => {}
        }
    } else {
        next.arms = top.to_vec();
        if top.len() == 1 {
            next.settle_all_on(top[0]);
        }
    }
    next
}

/// The same step as seen by a committed player that only learns `code`.
pub fn apply_code(st: &RecursionState, top: &[usize], code: usize) -> RecursionState {
    let mut next = st.clone();
    next.epoch += 1;
    let m = st.m();
    if code == 0 {
        next.done = true;
    } else if code >= m {
        next.arms = top.to_vec();
    } else {
        let commit: Vec<usize> = st
            .active
            .iter()
            .copied()
            .filter(|&p| p != 0)
            .take(m - code)
            .collect();
        next.active.retain(|p| !commit.contains(p));
        next.fixed.extend_from_slice(top);
        next.arms.retain(|a| !top.contains(a));
    }
    next
}
