//! State-action frequencies of stationary profiles, recurrent points of
//! communicating sets and the type-A feasibility program.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chain::{recurrent_classes, stationary_distribution, CesaroLimit};
use crate::error::StructureError;
use crate::game::{PayoffVector, StationaryCorrelated, StochasticGame};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::structure::mask;

/// Guard on the number of pure profiles enumerated on one set.
pub const PROFILE_GUARD: usize = 1_000_000;

/// Long-run frequency of each (state, profile) pair: `weights[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyVector {
    pub weights: Vec<Vec<f64>>,
}

impl FrequencyVector {
    pub fn marginal(&self, s: usize) -> f64 {
        self.weights[s].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().flatten().sum()
    }

    pub fn distance(&self, other: &FrequencyVector) -> f64 {
        self.weights
            .iter()
            .flatten()
            .zip(other.weights.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Cesàro limit of the state-action frequencies from `s1`.
pub fn stationary_frequency(
    game: &StochasticGame,
    profile: &StationaryCorrelated,
    s1: usize,
) -> FrequencyVector {
    let (p, _) = profile.chain(game);
    let occupation = CesaroLimit::new(&p).occupation(s1);
    frequency_from_occupation(profile, &occupation)
}

fn frequency_from_occupation(
    profile: &StationaryCorrelated,
    occupation: &[f64],
) -> FrequencyVector {
    FrequencyVector {
        weights: occupation
            .iter()
            .zip(&profile.actions)
            .map(|(&m, w)| w.iter().map(|x| m * x).collect())
            .collect(),
    }
}

/// `Σ ρ(s,a) u(s,a)` per player.
pub fn payoff_of_frequency(game: &StochasticGame, rho: &FrequencyVector) -> PayoffVector {
    let mut out = vec![0.0; game.players()];
    for (s, row) in rho.weights.iter().enumerate() {
        for (a, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &u) in out.iter_mut().zip(game.payoff(s, a)) {
                *o += w * u;
            }
        }
    }
    out
}

/// Frequency point of a pure stationary profile on one of its recurrent
/// classes inside a set.
#[derive(Debug, Clone, Serialize)]
pub struct RecurrentPoint {
    /// Joint profile at each state of the class.
    pub choice: Vec<Option<usize>>,
    pub class: Vec<usize>,
    pub rho: FrequencyVector,
    pub payoff: PayoffVector,
}

/// Enumerates the frequency points of all pure stationary profiles whose
/// recurrent classes lie in `set`, deduplicated by frequency vector.
///
/// Only profiles that keep play inside `set` are candidates at each state;
/// a state without one cannot belong to a recurrent class inside the set.
pub fn enumerate_recurrent_points(
    game: &StochasticGame,
    set: &[usize],
) -> Result<Vec<RecurrentPoint>, StructureError> {
    let n = game.states();
    let inside = mask(n, set);
    let options: Vec<Vec<Option<usize>>> = set
        .iter()
        .map(|&s| {
            let keep: Vec<Option<usize>> = (0..game.profiles())
                .filter(|&a| game.stays_in(s, a, &inside))
                .map(Some)
                .collect();
            if keep.is_empty() {
                vec![None]
            } else {
                keep
            }
        })
        .collect();
    let count: f64 = options.iter().map(|o| o.len() as f64).product();
    if count > PROFILE_GUARD as f64 {
        return Err(StructureError::TooManyProfiles {
            count,
            guard: PROFILE_GUARD,
        });
    }

    let k = set.len();
    let mut points: Vec<RecurrentPoint> = Vec::new();
    let mut digits = vec![0usize; k];
    loop {
        // Chain on the set plus an absorbing sink standing for "left the set".
        let sink = k;
        let mut p = DMatrix::zeros(k + 1, k + 1);
        p[(sink, sink)] = 1.0;
        for (r, &s) in set.iter().enumerate() {
            match options[r][digits[r]] {
                Some(a) => {
                    for (c, &t) in set.iter().enumerate() {
                        p[(r, c)] = game.transition(s, a)[t];
                    }
                }
                None => p[(r, sink)] = 1.0,
            }
        }
        for class in recurrent_classes(&p) {
            if class.contains(&sink) {
                continue;
            }
            let pi = stationary_distribution(&p, &class);
            let mut weights = vec![vec![0.0; game.profiles()]; n];
            let mut choice = vec![None; n];
            for &r in &class {
                let s = set[r];
                let a = options[r][digits[r]].expect("recurrent states stay inside");
                weights[s][a] = pi[r];
                choice[s] = Some(a);
            }
            let rho = FrequencyVector { weights };
            if points.iter().any(|q| q.rho.distance(&rho) <= 1e-12) {
                continue;
            }
            let payoff = payoff_of_frequency(game, &rho);
            let mut states: Vec<usize> = class.iter().map(|&r| set[r]).collect();
            states.sort_unstable();
            points.push(RecurrentPoint {
                choice,
                class: states,
                rho,
                payoff,
            });
        }
        // Odometer over per-state options, last state fastest.
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(points);
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < options[pos].len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Weights on recurrent points whose mixed payoff dominates a target.
#[derive(Debug, Clone, Serialize)]
pub struct TypeAPlan {
    pub atoms: Vec<RecurrentPoint>,
    pub weights: Vec<f64>,
    pub target: Vec<f64>,
    /// Smallest coordinate of `Σ β payoff − target`.
    pub slack: f64,
}

impl TypeAPlan {
    pub fn mixed_payoff(&self) -> Vec<f64> {
        mix(
            &self
                .atoms
                .iter()
                .map(|p| p.payoff.clone())
                .collect::<Vec<_>>(),
            &self.weights,
        )
    }
}

pub(crate) fn mix(points: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let dim = points.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for (p, &w) in points.iter().zip(weights) {
        for (o, &x) in out.iter_mut().zip(p) {
            *o += w * x;
        }
    }
    out
}

/// Maximizes `t` subject to `Σ β_k points[k] ≥ target + t` and `β ∈ Δ`.
/// Returns the weights and the optimal `t`.
pub fn max_min_slack(points: &[Vec<f64>], target: &[f64]) -> Option<(Vec<f64>, f64)> {
    let k = points.len();
    if k == 0 {
        return None;
    }
    let mut objective = vec![0.0; k + 1];
    objective[k] = 1.0;
    let mut lp = LinearProgram::maximize(objective);
    lp.set_free(k);
    for (i, &c) in target.iter().enumerate() {
        let mut row: Vec<f64> = points.iter().map(|p| p[i]).collect();
        row.push(-1.0);
        lp.constrain(row, Relation::Ge, c);
    }
    let mut simplex = vec![1.0; k];
    simplex.push(0.0);
    lp.constrain(simplex, Relation::Eq, 1.0);
    match lp.solve() {
        LpOutcome::Optimal { x, .. } => {
            let mut beta: Vec<f64> = x[..k]
                .iter()
                .map(|v| if *v < 1e-13 { 0.0 } else { *v })
                .collect();
            let mass: f64 = beta.iter().sum();
            beta.iter_mut().for_each(|v| *v /= mass);
            let achieved = mix(points, &beta);
            let slack = achieved
                .iter()
                .zip(target)
                .map(|(a, c)| a - c)
                .fold(f64::INFINITY, f64::min);
            Some((beta, slack))
        }
        _ => None,
    }
}

/// Removes atoms while keeping `Σ β p` fixed, until the support is affinely
/// independent (at most `dim + 1` atoms). Ties go to the lowest index.
pub fn caratheodory_reduce(points: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let mut beta = weights.to_vec();
    let dim = points.first().map_or(0, Vec::len);
    loop {
        let support: Vec<usize> = (0..beta.len()).filter(|&k| beta[k] > 0.0).collect();
        if support.len() <= dim + 1 {
            return beta;
        }
        // Null vector of [p_k; 1] over the support: (dim+1) × m, m > dim+1.
        let m = support.len();
        let mat = DMatrix::from_fn(dim + 1, m, |r, c| {
            if r < dim {
                points[support[c]][r]
            } else {
                1.0
            }
        });
        let d = null_direction(&mat);
        // Step along d until the first weight hits zero.
        let mut step = f64::INFINITY;
        let mut hit = support[0];
        for (c, &k) in support.iter().enumerate() {
            if d[c] > 1e-14 {
                let s = beta[k] / d[c];
                if s < step {
                    step = s;
                    hit = k;
                }
            }
        }
        if !step.is_finite() {
            return beta;
        }
        for (c, &k) in support.iter().enumerate() {
            beta[k] -= step * d[c];
            if beta[k] < 1e-15 {
                beta[k] = 0.0;
            }
        }
        beta[hit] = 0.0;
        let mass: f64 = beta.iter().sum();
        beta.iter_mut().for_each(|v| *v /= mass);
    }
}

/// Carathéodory reduction followed by one more step: with `dim + 1`
/// affinely independent atoms the mixture is interior to their simplex, so
/// it can move along the all-ones direction until an atom drops. Every
/// coordinate of the mixture weakly increases, leaving at most `dim` atoms.
pub fn reduce_upward(points: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let mut beta = caratheodory_reduce(points, weights);
    let dim = points.first().map_or(0, Vec::len);
    let support: Vec<usize> = (0..beta.len()).filter(|&k| beta[k] > 0.0).collect();
    if dim == 0 || support.len() != dim + 1 {
        return beta;
    }
    let m = dim + 1;
    let mat = DMatrix::from_fn(
        m,
        m,
        |r, c| if r < dim { points[support[c]][r] } else { 1.0 },
    );
    let rhs = nalgebra::DVector::from_fn(m, |r, _| if r < dim { 1.0 } else { 0.0 });
    let Some(w) = mat.lu().solve(&rhs) else {
        return beta;
    };
    let mut step = f64::INFINITY;
    let mut hit = None;
    for (c, &k) in support.iter().enumerate() {
        if w[c] < -1e-14 {
            let s = beta[k] / -w[c];
            if s < step {
                step = s;
                hit = Some(k);
            }
        }
    }
    let Some(hit) = hit else {
        return beta;
    };
    for (c, &k) in support.iter().enumerate() {
        beta[k] = (beta[k] + step * w[c]).max(0.0);
    }
    beta[hit] = 0.0;
    let mass: f64 = beta.iter().sum();
    beta.iter_mut().for_each(|v| *v /= mass);
    beta
}

fn null_direction(mat: &DMatrix<f64>) -> Vec<f64> {
    // Gram matrix eigenvector with the smallest eigenvalue.
    let gram = mat.transpose() * mat;
    let eig = gram.symmetric_eigen();
    let k = (0..eig.eigenvalues.len())
        .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .expect("nonempty");
    eig.eigenvectors.column(k).iter().copied().collect()
}

/// Type-A feasibility: weights on recurrent points of `set` whose mixed
/// payoff dominates `target`. Returns a plan only when the optimal slack is
/// nonnegative.
pub fn type_a_feasibility(points: &[RecurrentPoint], target: &[f64]) -> Option<TypeAPlan> {
    let payoffs: Vec<Vec<f64>> = points.iter().map(|p| p.payoff.clone()).collect();
    let (beta, slack) = max_min_slack(&payoffs, target)?;
    if slack < -1e-12 {
        return None;
    }
    let beta = reduce_upward(&payoffs, &beta);
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (k, &w) in beta.iter().enumerate() {
        if w > 0.0 {
            atoms.push(points[k].clone());
            weights.push(w);
        }
    }
    let achieved = mix(
        &atoms.iter().map(|p| p.payoff.clone()).collect::<Vec<_>>(),
        &weights,
    );
    let slack = achieved
        .iter()
        .zip(target)
        .map(|(a, c)| a - c)
        .fold(f64::INFINITY, f64::min);
    Some(TypeAPlan {
        atoms,
        weights,
        target: target.to_vec(),
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_two_cycle_frequency() {
        let g = StochasticGame::from_fn(2, &[1], |s, _| {
            let mut q = vec![0.0; 2];
            q[1 - s] = 1.0;
            (vec![s as f64], q)
        })
        .unwrap();
        let x = StationaryCorrelated::pure(&g, &[0, 0]);
        let rho = stationary_frequency(&g, &x, 0);
        assert!((rho.weights[0][0] - 0.5).abs() < 1e-15);
        assert!((payoff_of_frequency(&g, &rho)[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sorin_loop_point() {
        let g = StochasticGame::from_json(include_str!("../games/sorin.json")).unwrap();
        let points = enumerate_recurrent_points(&g, &[0]).unwrap();
        // Only T/L and T/R keep play in s0.
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].payoff, vec![1.0, 0.0]);
        assert_eq!(points[1].payoff, vec![0.0, 1.0]);
    }

    #[test]
    fn symmetric_points_split_evenly() {
        let points = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let (beta, slack) = max_min_slack(&points, &[0.4, 0.4]).unwrap();
        assert!((beta[0] - 0.5).abs() < 1e-12);
        assert!((slack - 0.1).abs() < 1e-12);
    }

    #[test]
    fn reduction_keeps_the_mixture() {
        let points = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![0.5, 0.5],
        ];
        let w = vec![0.2; 5];
        let before = mix(&points, &w);
        let reduced = caratheodory_reduce(&points, &w);
        assert!(reduced.iter().filter(|&&b| b > 0.0).count() <= 3);
        let after = mix(&points, &reduced);
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn upward_reduction_drops_to_dim_atoms() {
        let points = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let w = vec![0.4, 0.3, 0.3];
        let before = mix(&points, &w);
        let reduced = reduce_upward(&points, &w);
        assert!(reduced.iter().filter(|&&b| b > 0.0).count() <= 2);
        let after = mix(&points, &reduced);
        assert!(after[0] >= before[0] - 1e-12 && after[1] >= before[1] - 1e-12);
    }
}
