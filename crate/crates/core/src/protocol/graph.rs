/// Arms joined when their confidence intervals overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityGraph {
    pub nodes: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    labels: Vec<usize>,
}

impl ConnectivityGraph {
    /// `mu` and `radius` are indexed by arm.
    pub fn build(nodes: &[usize], mu: &[f64], radius: &[f64]) -> Self {
        let n = nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (nodes[i], nodes[j]);
                if (mu[a] - mu[b]).abs() <= radius[a] + radius[b] {
                    edges.push((a, b));
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
        let labels = (0..n).map(|i| find(&mut parent, i)).collect();
        Self {
            nodes: nodes.to_vec(),
            edges,
            labels,
        }
    }

    pub fn component_count(&self) -> usize {
        let mut l = self.labels.clone();
        l.sort_unstable();
        l.dedup();
        l.len()
    }

    /// (V_top, V_bottom): the component holding the best estimate and the rest.
    pub fn partition(&self, mu: &[f64]) -> Option<(Vec<usize>, Vec<usize>)> {
        if self.component_count() < 2 {
            return None;
        }
        let best = (0..self.nodes.len())
            .max_by(|&i, &j| {
                mu[self.nodes[i]]
                    .total_cmp(&mu[self.nodes[j]])
                    .then(self.nodes[j].cmp(&self.nodes[i]))
            })
            .expect("non-empty graph");
        let label = self.labels[best];
        let (top, bottom) = (0..self.nodes.len()).partition::<Vec<_>, _>(|&i| self.labels[i] == label);
        Some((
            top.into_iter().map(|i| self.nodes[i]).collect(),
            bottom.into_iter().map(|i| self.nodes[i]).collect(),
        ))
    }
}
