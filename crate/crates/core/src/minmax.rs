//! Zero-sum matrix games, the Shapley operator of the min-max game of one
//! player against the coalition of the others, and uniform min-max values.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::SolveError;
use crate::game::{check_discount, StochasticGame};
use crate::lp::{LinearProgram, Relation};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const ITERATION_CAP: usize = 1_000_000;

/// Values of one player, per state.
pub type ValueVector = Vec<f64>;

#[derive(Debug, Clone, Serialize)]
pub struct MatrixGameSolution {
    pub value: f64,
    /// Optimal mixed strategy of the row (maximizing) player.
    pub row: Vec<f64>,
    /// Optimal mixed strategy of the column (minimizing) player.
    pub col: Vec<f64>,
    /// Guaranteed payoff of `row`: `min_c row·M[:,c]`.
    pub lower: f64,
    /// Guaranteed cap of `col`: `max_r M[r,:]·col`.
    pub upper: f64,
}

/// Solves the zero-sum game with payoff matrix `m` (rows maximize) by two
/// linear programs, one per side.
///
/// The programs run on `m` rescaled to the range [0, 1], so that games
/// whose entries differ only in the sixth decimal (stage games close to
/// λ = 1) are solved as accurately as well-spread ones.
pub fn matrix_game_value(m: &[Vec<f64>]) -> Result<MatrixGameSolution, SolveError> {
    let rows = m.len();
    let cols = m[0].len();
    if rows == 1 || cols == 1 {
        return Ok(trivial_matrix_game(m));
    }
    let lo = m.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = m
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()) {
        let value = m[0][0];
        return Ok(MatrixGameSolution {
            value,
            row: unit(rows, 0),
            col: unit(cols, 0),
            lower: value,
            upper: value,
        });
    }
    let scaled: Vec<Vec<f64>> = m
        .iter()
        .map(|r| r.iter().map(|x| (x - lo) / (hi - lo)).collect())
        .collect();
    let (row, col) = optimal_strategies(&scaled)?;
    let lower = (0..cols)
        .map(|c| (0..rows).map(|r| row[r] * m[r][c]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let upper = m
        .iter()
        .map(|r| r.iter().zip(&col).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    if upper - lower > 1e-9 * (hi - lo) {
        return Err(SolveError::Lp(format!(
            "minimax gap {:e} exceeds tolerance",
            upper - lower
        )));
    }
    Ok(MatrixGameSolution {
        value: 0.5 * (lower + upper),
        row,
        col,
        lower,
        upper,
    })
}

fn optimal_strategies(m: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let rows = m.len();
    let cols = m[0].len();

    // Row player: max v  s.t.  Σ_r x_r M[r][c] ≥ v,  Σ x = 1.
    let mut lp = LinearProgram::maximize(unit(rows + 1, rows));
    lp.set_free(rows);
    for c in 0..cols {
        let mut coeffs: Vec<f64> = (0..rows).map(|r| m[r][c]).collect();
        coeffs.push(-1.0);
        lp.constrain(coeffs, Relation::Ge, 0.0);
    }
    let mut simplex = vec![1.0; rows];
    simplex.push(0.0);
    lp.constrain(simplex, Relation::Eq, 1.0);
    let (x, _) = lp
        .solve()
        .optimal()
        .ok_or_else(|| SolveError::Lp("row player program".into()))?;

    // Column player: min w  s.t.  Σ_c y_c M[r][c] ≤ w,  Σ y = 1.
    let mut objective = vec![0.0; cols + 1];
    objective[cols] = -1.0;
    let mut lp = LinearProgram::maximize(objective);
    lp.set_free(cols);
    for row in m {
        let mut coeffs = row.clone();
        coeffs.push(-1.0);
        lp.constrain(coeffs, Relation::Le, 0.0);
    }
    let mut simplex = vec![1.0; cols];
    simplex.push(0.0);
    lp.constrain(simplex, Relation::Eq, 1.0);
    let (y, _) = lp
        .solve()
        .optimal()
        .ok_or_else(|| SolveError::Lp("column player program".into()))?;

    Ok((normalize(&x[..rows]), normalize(&y[..cols])))
}

fn trivial_matrix_game(m: &[Vec<f64>]) -> MatrixGameSolution {
    let rows = m.len();
    let cols = m[0].len();
    let mut row = vec![0.0; rows];
    let mut col = vec![0.0; cols];
    let value;
    if rows == 1 {
        let c = argmin(&m[0]);
        value = m[0][c];
        row[0] = 1.0;
        col[c] = 1.0;
    } else {
        let column: Vec<f64> = m.iter().map(|r| r[0]).collect();
        let r = argmax(&column);
        value = column[r];
        row[r] = 1.0;
        col[0] = 1.0;
    }
    MatrixGameSolution {
        value,
        row,
        col,
        lower: value,
        upper: value,
    }
}

fn unit(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

fn normalize(x: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let mass: f64 = clipped.iter().sum();
    clipped.iter().map(|v| v / mass).collect()
}

/// First index of the minimum.
pub(crate) fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = k;
        }
    }
    best
}

/// First index of the maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// The one-shot matrix game of `player` at `s` against the coalition, with
/// continuation values `v`: rows are the player's actions, columns the joint
/// actions of the others.
fn stage_matrix(
    game: &StochasticGame,
    split: &[Vec<usize>],
    player: usize,
    s: usize,
    lambda: f64,
    v: &[f64],
) -> Vec<Vec<f64>> {
    split
        .iter()
        .map(|row| {
            row.iter()
                .map(|&a| {
                    let cont: f64 = game
                        .transition(s, a)
                        .iter()
                        .zip(v)
                        .map(|(p, w)| p * w)
                        .sum();
                    (1.0 - lambda) * game.payoff(s, a)[player] + lambda * cont
                })
                .collect()
        })
        .collect()
}

/// One application of the Shapley operator of `player`'s min-max game.
/// Returns `Tv` and the maximizer's optimal mixed action per state.
pub fn shapley_operator(
    game: &StochasticGame,
    player: usize,
    lambda: f64,
    v: &[f64],
) -> Result<(ValueVector, Vec<Vec<f64>>), SolveError> {
    check_discount(lambda)?;
    let split = game.split_profiles(player);
    let mut tv = Vec::with_capacity(game.states());
    let mut strategies = Vec::with_capacity(game.states());
    for s in 0..game.states() {
        let m = stage_matrix(game, &split, player, s, lambda, v);
        let sol = matrix_game_value(&m)?;
        tv.push(sol.value);
        strategies.push(sol.row);
    }
    Ok((tv, strategies))
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscountedValue {
    pub values: ValueVector,
    /// Sup-norm of `Tv − v` at the returned vector.
    pub residual: f64,
    pub iterations: usize,
}

/// λ-discounted min-max value of `player` against the coalition of the
/// other players.
///
/// Uses strategy iteration on the maximizer (each step fixes the maximizer's
/// optimal stage strategies and solves the minimizer's MDP exactly), with
/// value-iteration steps as a fallback. Stops once `‖Tv − v‖∞ ≤ tol`.
pub fn shapley_minmax(
    game: &StochasticGame,
    player: usize,
    lambda: f64,
    tol: f64,
) -> Result<DiscountedValue, SolveError> {
    shapley_minmax_from(game, player, lambda, tol, None)
}

/// Policy steps in a row that may fail to lower the residual.
const MAX_STALLS: usize = 2;

pub fn shapley_minmax_from(
    game: &StochasticGame,
    player: usize,
    lambda: f64,
    tol: f64,
    start: Option<&[f64]>,
) -> Result<DiscountedValue, SolveError> {
    check_discount(lambda)?;
    let n = game.states();
    let split = game.split_profiles(player);
    let mut v: Vec<f64> = match start {
        Some(w) => w.to_vec(),
        None => vec![0.0; n],
    };
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut use_policy_step = true;
    let mut stalls = 0;
    while iterations < ITERATION_CAP {
        iterations += 1;
        let mut tv = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        for s in 0..n {
            let m = stage_matrix(game, &split, player, s, lambda, &v);
            let sol = matrix_game_value(&m)?;
            tv.push(sol.value);
            x.push(sol.row);
        }
        residual = sup_distance(&tv, &v);
        if residual <= tol {
            let values = tv;
            let residual = {
                let (t2, _) = shapley_operator(game, player, lambda, &values)?;
                sup_distance(&t2, &values)
            };
            return Ok(DiscountedValue {
                values,
                residual,
                iterations,
            });
        }
        if use_policy_step {
            let next = minimizer_response(game, &split, player, lambda, &x, &tv)?;
            // From a warm start the first policy step can raise the residual;
            // after that the values only increase. Fall back to plain value
            // iteration when policy steps keep failing to make progress.
            let (t_next, _) = shapley_operator(game, player, lambda, &next)?;
            if sup_distance(&t_next, &next) < residual {
                stalls = 0;
            } else {
                stalls += 1;
            }
            if stalls <= MAX_STALLS {
                v = next;
                continue;
            }
            use_policy_step = false;
        }
        v = tv;
    }
    Err(SolveError::IterationCap {
        cap: ITERATION_CAP,
        residual,
    })
}

/// Value of the MDP faced by the coalition when the maximizer is fixed to
/// `x`, solved by policy iteration started from greedy responses to `v`.
fn minimizer_response(
    game: &StochasticGame,
    split: &[Vec<usize>],
    player: usize,
    lambda: f64,
    x: &[Vec<f64>],
    v: &[f64],
) -> Result<Vec<f64>, SolveError> {
    let n = game.states();
    let responses = split[0].len();
    // Reward and transition of each (state, coalition profile).
    let mut reward = vec![vec![0.0; responses]; n];
    let mut trans = vec![vec![vec![0.0; n]; responses]; n];
    for s in 0..n {
        for b in 0..responses {
            for (ai, row) in split.iter().enumerate() {
                let w = x[s][ai];
                if w == 0.0 {
                    continue;
                }
                let a = row[b];
                reward[s][b] += w * (1.0 - lambda) * game.payoff(s, a)[player];
                for (t, &p) in game.transition(s, a).iter().enumerate() {
                    trans[s][b][t] += w * p;
                }
            }
        }
    }
    let q_value = |s: usize, b: usize, w: &[f64]| -> f64 {
        reward[s][b] + lambda * trans[s][b].iter().zip(w).map(|(p, x)| p * x).sum::<f64>()
    };
    let mut policy: Vec<usize> = (0..n)
        .map(|s| {
            let q: Vec<f64> = (0..responses).map(|b| q_value(s, b, v)).collect();
            argmin(&q)
        })
        .collect();
    for _ in 0..10_000 {
        let mut a = DMatrix::identity(n, n);
        let mut r = DVector::zeros(n);
        for s in 0..n {
            let b = policy[s];
            r[s] = reward[s][b];
            for t in 0..n {
                a[(s, t)] -= lambda * trans[s][b][t];
            }
        }
        let w = a
            .lu()
            .solve(&r)
            .ok_or(SolveError::Singular("minimizer policy evaluation"))?;
        let w: Vec<f64> = w.iter().copied().collect();
        let mut changed = false;
        for s in 0..n {
            let current = q_value(s, policy[s], &w);
            let q: Vec<f64> = (0..responses).map(|b| q_value(s, b, &w)).collect();
            let best = argmin(&q);
            if q[best] < current - 1e-13 {
                policy[s] = best;
                changed = true;
            }
        }
        if !changed {
            return Ok(w);
        }
    }
    Err(SolveError::IterationCap {
        cap: 10_000,
        residual: f64::NAN,
    })
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// The default schedule `λ_k = 1 − 2^{-k}`, `k = 1..=20`.
pub fn default_schedule() -> Vec<f64> {
    (1..=20).map(|k| 1.0 - 0.5_f64.powi(k)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct UniformEstimate {
    pub player: usize,
    pub lambdas: Vec<f64>,
    /// `values[k][s]` at `lambdas[k]`.
    pub values: Vec<ValueVector>,
    /// `differences[k] = ‖values[k+1] − values[k]‖∞`.
    pub differences: Vec<f64>,
    /// Richardson extrapolation of the last three schedule points.
    pub extrapolate: Option<ValueVector>,
    pub estimate: ValueVector,
    pub used_extrapolate: bool,
    pub converged: bool,
}

/// Estimates the uniform min-max value of `player` from the discounted
/// values along `schedule`.
///
/// The extrapolation `(8v_k − 6v_{k−1} + v_{k−2})/3` removes the first two
/// terms of an expansion in `1 − λ` when consecutive schedule points halve
/// `1 − λ`; it is used only while successive differences keep decreasing.
pub fn uniform_minmax(
    game: &StochasticGame,
    player: usize,
    schedule: &[f64],
    tol: f64,
) -> Result<UniformEstimate, SolveError> {
    let mut values: Vec<ValueVector> = Vec::with_capacity(schedule.len());
    for &lambda in schedule {
        let start = values.last().map(Vec::as_slice);
        let dv = shapley_minmax_from(game, player, lambda, tol, start)?;
        values.push(dv.values);
    }
    let differences: Vec<f64> = values
        .windows(2)
        .map(|w| sup_distance(&w[1], &w[0]))
        .collect();
    let k = values.len();
    let halving = schedule
        .windows(2)
        .all(|w| ((1.0 - w[1]) * 2.0 - (1.0 - w[0])).abs() <= 1e-12 * (1.0 - w[0]));
    let extrapolate = (k >= 3 && halving).then(|| {
        (0..game.states())
            .map(|s| (8.0 * values[k - 1][s] - 6.0 * values[k - 2][s] + values[k - 3][s]) / 3.0)
            .collect::<Vec<f64>>()
    });
    let d = &differences;
    let tiny = d.last().is_some_and(|&x| x <= 1e-12);
    let decreasing = d.len() >= 2 && d[d.len() - 1] < d[d.len() - 2];
    let converged = tiny || decreasing;
    let last = values.last().cloned().unwrap_or_default();
    let bound = game.payoff_bound();
    let (estimate, used_extrapolate) = match &extrapolate {
        Some(r) if decreasing && !tiny => {
            (r.iter().map(|x| x.clamp(-bound, bound)).collect(), true)
        }
        _ => (last, false),
    };
    Ok(UniformEstimate {
        player,
        lambdas: schedule.to_vec(),
        values,
        differences,
        extrapolate,
        estimate,
        used_extrapolate,
        converged,
    })
}

/// Merges values of one player that agree to within `tol` (single-linkage
/// clusters on the sorted values) into their mean, so that equal uniform
/// values produce exact ties in the auxiliary games.
pub fn snap_values(values: &[f64], tol: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = values.to_vec();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] - values[order[end - 1]] <= tol {
            end += 1;
        }
        let members = &order[start..end];
        let mean = members.iter().map(|&s| values[s]).sum::<f64>() / members.len() as f64;
        for &s in members {
            out[s] = mean;
        }
        start = end;
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct MinMaxReport {
    /// Always `"coalition"`: the opponents are treated as one correlated
    /// adversary choosing joint actions.
    pub adversary_mode: String,
    /// Set when there are three or more players, where the coalition value
    /// can lie below the min-max value against independent opponents.
    pub coalition_caveat: bool,
    pub per_player: Vec<UniformEstimate>,
    /// `v1[i][s]` after snapping near-equal values.
    pub v1: Vec<ValueVector>,
}

impl MinMaxReport {
    pub fn all_converged(&self) -> bool {
        self.per_player.iter().all(|p| p.converged)
    }

    /// `v1` transposed to `[s][i]`.
    pub fn by_state(&self) -> Vec<Vec<f64>> {
        let n = self.v1.first().map_or(0, Vec::len);
        (0..n)
            .map(|s| self.v1.iter().map(|v| v[s]).collect())
            .collect()
    }
}

/// Uniform min-max estimates for all players, computed in parallel.
pub fn minmax_report(
    game: &StochasticGame,
    schedule: &[f64],
    tol: f64,
) -> Result<MinMaxReport, SolveError> {
    let per_player: Vec<UniformEstimate> = (0..game.players())
        .into_par_iter()
        .map(|i| uniform_minmax(game, i, schedule, tol))
        .collect::<Result<_, _>>()?;
    let v1 = per_player
        .iter()
        .map(|p| snap_values(&p.estimate, 1e-6))
        .collect();
    Ok(MinMaxReport {
        adversary_mode: "coalition".into(),
        coalition_caveat: game.players() >= 3,
        per_player,
        v1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorin() -> StochasticGame {
        StochasticGame::from_json(include_str!("../games/sorin.json")).unwrap()
    }

    #[test]
    fn matching_pennies() {
        let sol = matrix_game_value(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        assert!(sol.value.abs() < 1e-12);
        assert!((sol.row[0] - 0.5).abs() < 1e-12 && (sol.col[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dominant_row() {
        let sol = matrix_game_value(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert!((sol.row[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn absorbing_state_keeps_its_payoff() {
        let g = sorin();
        let s = g.state_index("abs20").unwrap();
        for lambda in [0.3, 0.9, 0.999] {
            let v = shapley_minmax(&g, 0, lambda, 1e-10).unwrap();
            assert!((v.values[s] - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sorin_player_one_is_two_thirds_at_every_discount() {
        let g = sorin();
        for lambda in [0.5, 0.9, 0.99, 1.0 - 2f64.powi(-20)] {
            let v = shapley_minmax(&g, 0, lambda, 1e-9).unwrap();
            assert!(
                (v.values[0] - 2.0 / 3.0).abs() < 1e-8,
                "{lambda}: {:?}",
                v.values
            );
        }
    }

    #[test]
    fn sorin_uniform_values() {
        let g = sorin();
        let report = minmax_report(&g, &default_schedule(), 1e-9).unwrap();
        assert!((report.v1[0][0] - 2.0 / 3.0).abs() < 1e-3);
        assert!((report.v1[1][0] - 0.5).abs() < 1e-3);
        assert!(report.all_converged());
        assert!(!report.coalition_caveat);
    }

    #[test]
    fn snapping_merges_close_values() {
        let out = snap_values(&[0.5, 0.5000001, 0.2, 1.0], 1e-6);
        assert_eq!(out[0], out[1]);
        assert!((out[0] - 0.50000005).abs() < 1e-12);
        assert_eq!(out[2], 0.2);
    }

    #[test]
    fn rejects_undiscounted() {
        assert!(shapley_minmax(&sorin(), 0, 1.0, 1e-9).is_err());
    }

    #[test]
    fn warm_start_with_a_worse_first_policy_step_converges() {
        let g = &crate::random::mdp_suite(20, 0)[17];
        let report = minmax_report(g, &default_schedule(), DEFAULT_TOL).unwrap();
        for v in &report.v1[0] {
            assert!((v + 1.0 / 64.0).abs() < 1e-9);
        }
    }
}
