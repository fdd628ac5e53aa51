//! Finite Markov chain analysis: strongly connected components, recurrent
//! classes, stationary distributions, absorption and Cesàro limits.

use nalgebra::{DMatrix, DVector};

/// Strongly connected components of a digraph given by adjacency lists, in
/// reverse topological order (sinks first).
pub fn strongly_connected(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct Tarjan<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }

    impl Tarjan<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.next);
            self.low[v] = self.next;
            self.next += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for &w in &self.adj[v] {
                match self.index[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                    Some(_) => {}
                }
            }
            if Some(self.low[v]) == self.index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = self.stack.pop().expect("tarjan stack");
                    self.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                self.out.push(comp);
            }
        }
    }

    let n = adj.len();
    let mut t = Tarjan {
        adj,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    t.out
}

/// Bottom strongly connected components (no edge leaves them), each sorted,
/// ordered by smallest member.
pub fn bottom_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let comps = strongly_connected(adj);
    let mut comp_of = vec![0; adj.len()];
    for (c, comp) in comps.iter().enumerate() {
        for &v in comp {
            comp_of[v] = c;
        }
    }
    let mut bottom: Vec<Vec<usize>> = comps
        .iter()
        .enumerate()
        .filter(|(c, comp)| {
            comp.iter()
                .all(|&v| adj[v].iter().all(|&w| comp_of[w] == *c))
        })
        .map(|(_, comp)| comp.clone())
        .collect();
    bottom.sort();
    bottom
}

/// Adjacency lists of the positive entries of a transition matrix.
pub fn support_graph(p: &DMatrix<f64>) -> Vec<Vec<usize>> {
    (0..p.nrows())
        .map(|s| (0..p.ncols()).filter(|&t| p[(s, t)] > 0.0).collect())
        .collect()
}

/// Recurrent classes of the chain.
pub fn recurrent_classes(p: &DMatrix<f64>) -> Vec<Vec<usize>> {
    bottom_components(&support_graph(p))
}

/// Stationary distribution of the chain restricted to a closed class, as a
/// full-length vector that vanishes off the class.
pub fn stationary_distribution(p: &DMatrix<f64>, class: &[usize]) -> Vec<f64> {
    let k = class.len();
    let mut out = vec![0.0; p.nrows()];
    if k == 1 {
        out[class[0]] = 1.0;
        return out;
    }
    // πᵀ(P − I) = 0 with the last equation replaced by Σπ = 1.
    let mut a = DMatrix::zeros(k, k);
    for (r, &t) in class.iter().enumerate() {
        for (c, &s) in class.iter().enumerate() {
            a[(r, c)] = p[(s, t)] - if s == t { 1.0 } else { 0.0 };
        }
    }
    for c in 0..k {
        a[(k - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(k);
    b[k - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .expect("irreducible class has a stationary law");
    for (c, &s) in class.iter().enumerate() {
        out[s] = pi[c].max(0.0);
    }
    let mass: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= mass);
    out
}

/// Probability of eventually entering `target` from each state, computed by
/// a linear solve on the states that can reach it.
pub fn reach_probability(p: &DMatrix<f64>, target: &[bool]) -> Vec<f64> {
    let n = p.nrows();
    let adj = support_graph(p);
    // Backward reachability from the target.
    let mut can = target.to_vec();
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if !can[s] && adj[s].iter().any(|&t| can[t]) {
                can[s] = true;
                changed = true;
            }
        }
    }
    let unknown: Vec<usize> = (0..n).filter(|&s| can[s] && !target[s]).collect();
    let mut h: Vec<f64> = target.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    if unknown.is_empty() {
        return h;
    }
    let k = unknown.len();
    let mut a = DMatrix::identity(k, k);
    let mut b = DVector::zeros(k);
    for (r, &s) in unknown.iter().enumerate() {
        for (c, &t) in unknown.iter().enumerate() {
            a[(r, c)] -= p[(s, t)];
        }
        b[r] = (0..n)
            .filter(|&t| target[t])
            .map(|t| p[(s, t)])
            .sum::<f64>();
    }
    let x = a
        .lu()
        .solve(&b)
        .expect("reachability system is nonsingular");
    for (r, &s) in unknown.iter().enumerate() {
        h[s] = x[r].clamp(0.0, 1.0);
    }
    h
}

/// Expected terminal reward of a substochastic chain: solves
/// `h = P h + b` where `b[s][j]` is the reward mass collected when the
/// chain stops from `s`. States that cannot reach a stopping state get 0.
pub fn stopped_values(p: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    let adj = support_graph(p);
    let mut can: Vec<bool> = (0..n).map(|s| (1.0 - p.row(s).sum()) > 1e-15).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if !can[s] && adj[s].iter().any(|&t| can[t]) {
                can[s] = true;
                changed = true;
            }
        }
    }
    let live: Vec<usize> = (0..n).filter(|&s| can[s]).collect();
    let mut out = DMatrix::zeros(n, b.ncols());
    if live.is_empty() {
        return out;
    }
    let k = live.len();
    let mut a = DMatrix::identity(k, k);
    let mut rhs = DMatrix::zeros(k, b.ncols());
    for (r, &s) in live.iter().enumerate() {
        for (c, &t) in live.iter().enumerate() {
            a[(r, c)] -= p[(s, t)];
        }
        for j in 0..b.ncols() {
            rhs[(r, j)] = b[(s, j)];
        }
    }
    let x = a.lu().solve(&rhs).expect("stopping system is nonsingular");
    for (r, &s) in live.iter().enumerate() {
        for j in 0..b.ncols() {
            out[(s, j)] = x[(r, j)];
        }
    }
    out
}

/// Long-run behaviour of a chain: recurrent classes, their stationary laws
/// and the probability of being absorbed in each.
#[derive(Debug, Clone)]
pub struct CesaroLimit {
    pub classes: Vec<Vec<usize>>,
    /// `stationary[k]` is the full-length stationary law of class `k`.
    pub stationary: Vec<Vec<f64>>,
    /// `absorption[s][k]`
    pub absorption: Vec<Vec<f64>>,
}

impl CesaroLimit {
    pub fn new(p: &DMatrix<f64>) -> Self {
        let n = p.nrows();
        let classes = recurrent_classes(p);
        let stationary = classes
            .iter()
            .map(|c| stationary_distribution(p, c))
            .collect();
        let mut absorption = vec![vec![0.0; classes.len()]; n];
        for (k, class) in classes.iter().enumerate() {
            let mut mask = vec![false; n];
            for &s in class {
                mask[s] = true;
            }
            let h = reach_probability(p, &mask);
            for s in 0..n {
                absorption[s][k] = h[s];
            }
        }
        CesaroLimit {
            classes,
            stationary,
            absorption,
        }
    }

    /// Long-run state distribution starting from `s`.
    pub fn occupation(&self, s: usize) -> Vec<f64> {
        let n = self.absorption.len();
        let mut out = vec![0.0; n];
        for (k, pi) in self.stationary.iter().enumerate() {
            let w = self.absorption[s][k];
            if w == 0.0 {
                continue;
            }
            for t in 0..n {
                out[t] += w * pi[t];
            }
        }
        out
    }

    /// Limit of average rewards, one column per reward stream: `out[s][j]`.
    pub fn average_reward(&self, r: &DMatrix<f64>) -> Vec<Vec<f64>> {
        let n = self.absorption.len();
        let class_value: Vec<Vec<f64>> = self
            .stationary
            .iter()
            .map(|pi| {
                (0..r.ncols())
                    .map(|j| (0..n).map(|t| pi[t] * r[(t, j)]).sum())
                    .collect()
            })
            .collect();
        (0..n)
            .map(|s| {
                (0..r.ncols())
                    .map(|j| {
                        class_value
                            .iter()
                            .enumerate()
                            .map(|(k, v)| self.absorption[s][k] * v[j])
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows.len();
        DMatrix::from_fn(n, n, |r, c| rows[r][c])
    }

    #[test]
    fn identity_chain_has_singleton_classes() {
        let p = DMatrix::identity(3, 3);
        assert_eq!(recurrent_classes(&p), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn two_cycle_is_one_class() {
        let p = matrix(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(recurrent_classes(&p), vec![vec![0, 1]]);
        let pi = stationary_distribution(&p, &[0, 1]);
        assert!((pi[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gambler_absorption() {
        // Symmetric walk on 0..=3 absorbed at both ends.
        let p = matrix(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[0.5, 0.0, 0.5, 0.0],
            &[0.0, 0.5, 0.0, 0.5],
            &[0.0, 0.0, 0.0, 1.0],
        ]);
        let lim = CesaroLimit::new(&p);
        assert_eq!(lim.classes, vec![vec![0], vec![3]]);
        assert!((lim.absorption[1][0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((lim.absorption[2][1] - 2.0 / 3.0).abs() < 1e-12);
        let occ = lim.occupation(1);
        assert!((occ[3] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sccs_are_reverse_topological() {
        let adj = vec![vec![1], vec![2], vec![1, 3], vec![]];
        let comps = strongly_connected(&adj);
        assert_eq!(comps[0], vec![3]);
        assert_eq!(bottom_components(&adj), vec![vec![3]]);
    }
}
