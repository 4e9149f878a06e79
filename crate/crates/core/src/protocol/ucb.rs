use crate::stats::ConfidenceParams;

#[derive(Clone, Debug, PartialEq)]
pub struct Ucb {
    pub arms: Vec<usize>,
    counts: Vec<u64>,
    sums: Vec<f64>,
}

impl Ucb {
    pub fn new(arms: Vec<usize>) -> Self {
        let n = arms.len();
        Self {
            arms,
            counts: vec![0; n],
            sums: vec![0.0; n],
        }
    }

    fn slot(&self, params: &ConfidenceParams) -> usize {
        if let Some(i) = self.counts.iter().position(|&c| c == 0) {
            return i;
        }
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..self.arms.len() {
            let v = self.sums[i] / self.counts[i] as f64 + params.b(self.counts[i]);
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        best
    }

    pub fn choose(&self, params: &ConfidenceParams) -> usize {
        self.arms[self.slot(params)]
    }

    pub fn update(&mut self, arm: usize, reward: f64) {
        if let Some(i) = self.arms.iter().position(|&a| a == arm) {
            self.counts[i] += 1;
            self.sums[i] += reward;
        }
    }

    pub fn pulls(&self) -> &[u64] {
        &self.counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::FeedbackMode;

    #[test]
    fn single_candidate() {
        let p = ConfidenceParams::new(0.01, 1, 3, FeedbackMode::HardSax);
        let mut u = Ucb::new(vec![2]);
        for _ in 0..10 {
            assert_eq!(u.choose(&p), 2);
            u.update(2, 0.3);
        }
    }

    #[test]
    fn point_masses_settle_on_better() {
        let p = ConfidenceParams::new(0.01, 1, 2, FeedbackMode::HardSax);
        let mu = [0.2, 0.9];
        let mut u = Ucb::new(vec![0, 1]);
        let mut last = 0;
        for _ in 0..2000 {
            last = u.choose(&p);
            u.update(last, mu[last]);
        }
        assert_eq!(last, 1);
        assert!(u.pulls()[1] > u.pulls()[0]);
    }
}
