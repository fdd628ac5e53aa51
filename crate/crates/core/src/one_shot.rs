//! Auxiliary one-shot games whose payoffs are expected next-state uniform
//! min-max values, and enumeration of their equilibria.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::SolveError;
use crate::game::StochasticGame;
use crate::lp::{LinearProgram, Relation};

pub const EXACT_EQ_TOL: f64 = 1e-9;
pub const APPROX_EQ_TOL: f64 = 1e-6;

/// The one-shot game at a state: `payoffs[a][i] = Σ_t q(t|s,a) v1[t][i]`.
#[derive(Debug, Clone, Serialize)]
pub struct AuxiliaryGame {
    pub state: usize,
    pub action_counts: Vec<usize>,
    pub payoffs: Vec<Vec<f64>>,
}

/// `v1` is indexed `[state][player]`.
pub fn build_auxiliary_game(game: &StochasticGame, s: usize, v1: &[Vec<f64>]) -> AuxiliaryGame {
    let payoffs = (0..game.profiles())
        .map(|a| continuation(game, game.transition(s, a), v1))
        .collect();
    AuxiliaryGame {
        state: s,
        action_counts: game.action_counts(),
        payoffs,
    }
}

fn continuation(game: &StochasticGame, q: &[f64], v1: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; game.players()];
    for (t, &p) in q.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(&v1[t]) {
            *o += p * v;
        }
    }
    out
}

impl AuxiliaryGame {
    pub fn players(&self) -> usize {
        self.action_counts.len()
    }

    fn stride(&self, player: usize) -> usize {
        self.action_counts[player + 1..].iter().product()
    }

    fn action_of(&self, a: usize, player: usize) -> usize {
        (a / self.stride(player)) % self.action_counts[player]
    }

    /// Expected payoff vector of independent mixed actions.
    pub fn payoff(&self, mixed: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.players()];
        for (a, u) in self.payoffs.iter().enumerate() {
            let w: f64 = (0..self.players())
                .map(|i| mixed[i][self.action_of(a, i)])
                .product();
            if w == 0.0 {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(u) {
                *o += w * x;
            }
        }
        out
    }

    /// Payoff of `player` from each pure action against the others' mixed actions.
    pub fn action_payoffs(&self, mixed: &[Vec<f64>], player: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.action_counts[player]];
        for (a, u) in self.payoffs.iter().enumerate() {
            let w: f64 = (0..self.players())
                .filter(|&j| j != player)
                .map(|j| mixed[j][self.action_of(a, j)])
                .product();
            if w == 0.0 {
                continue;
            }
            out[self.action_of(a, player)] += w * u[player];
        }
        out
    }

    /// Largest gain any player obtains from a unilateral pure deviation.
    pub fn regret(&self, mixed: &[Vec<f64>]) -> f64 {
        (0..self.players())
            .map(|i| {
                let per_action = self.action_payoffs(mixed, i);
                let current: f64 = per_action.iter().zip(&mixed[i]).map(|(u, x)| u * x).sum();
                let best = per_action.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                best - current
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumProfile {
    /// Mixed action per player.
    pub actions: Vec<Vec<f64>>,
    /// Pure scan or two-player support enumeration (true), or a best-response
    /// dynamics fixed point (false).
    pub exact: bool,
    pub regret: f64,
}

impl EquilibriumProfile {
    pub fn joint(&self, game: &StochasticGame) -> Vec<f64> {
        game.product(&self.actions)
    }

    pub fn is_pure(&self) -> bool {
        self.actions.iter().all(|x| x.contains(&1.0))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumSet {
    pub state: usize,
    pub profiles: Vec<EquilibriumProfile>,
    pub eq_tol: f64,
    /// Support enumeration keeps one representative per support pair, so a
    /// continuum of equilibria appears as finitely many points.
    pub representatives_only: bool,
}

/// Enumerates equilibria of an auxiliary game.
///
/// Pure equilibria are found by a full scan. With one player, the uniform
/// mixture over optimal actions is added. With two players every support
/// pair is tested by a linear program. With three or more players,
/// best-response dynamics are run from 20 seeded random starts and kept when
/// their regret is at most [`APPROX_EQ_TOL`].
pub fn enumerate_equilibria(
    aux: &AuxiliaryGame,
    eq_tol: f64,
    seed: u64,
) -> Result<EquilibriumSet, SolveError> {
    let mut profiles: Vec<EquilibriumProfile> = Vec::new();
    let n_profiles = aux.payoffs.len();
    for a in 0..n_profiles {
        let mixed: Vec<Vec<f64>> = (0..aux.players())
            .map(|i| one_hot(aux.action_counts[i], aux.action_of(a, i)))
            .collect();
        let regret = aux.regret(&mixed);
        if regret <= eq_tol {
            push_unique(&mut profiles, mixed, true, regret);
        }
    }

    match aux.players() {
        1 => {
            let u: Vec<f64> = aux.payoffs.iter().map(|u| u[0]).collect();
            let best = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let optimal: Vec<usize> = (0..u.len()).filter(|&a| u[a] >= best - eq_tol).collect();
            if optimal.len() > 1 {
                let mut x = vec![0.0; u.len()];
                for &a in &optimal {
                    x[a] = 1.0 / optimal.len() as f64;
                }
                let regret = aux.regret(&[x.clone()]);
                push_unique(&mut profiles, vec![x], true, regret);
            }
        }
        2 => {
            for (x, y) in support_enumeration(aux)? {
                let mixed = vec![x, y];
                let regret = aux.regret(&mixed);
                if regret <= eq_tol {
                    push_unique(&mut profiles, mixed, true, regret);
                }
            }
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let start: Vec<Vec<f64>> = aux
                    .action_counts
                    .iter()
                    .map(|&k| {
                        let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
                        let m: f64 = w.iter().sum();
                        w.iter().map(|v| v / m).collect()
                    })
                    .collect();
                let mixed = best_response_dynamics(aux, start);
                let regret = aux.regret(&mixed);
                if regret <= APPROX_EQ_TOL.max(eq_tol) {
                    let exact = regret <= eq_tol && mixed.iter().all(|x| x.contains(&1.0));
                    push_unique(&mut profiles, mixed, exact, regret);
                }
            }
        }
    }

    if profiles.is_empty() {
        return Err(SolveError::Lp(format!(
            "no equilibrium found for the auxiliary game at state {}",
            aux.state
        )));
    }
    Ok(EquilibriumSet {
        state: aux.state,
        profiles,
        eq_tol,
        representatives_only: aux.players() == 2,
    })
}

fn one_hot(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

fn push_unique(
    out: &mut Vec<EquilibriumProfile>,
    actions: Vec<Vec<f64>>,
    exact: bool,
    regret: f64,
) {
    let same = |other: &EquilibriumProfile| {
        other
            .actions
            .iter()
            .flatten()
            .zip(actions.iter().flatten())
            .all(|(a, b)| (a - b).abs() <= 1e-12)
    };
    if !out.iter().any(same) {
        out.push(EquilibriumProfile {
            actions,
            exact,
            regret,
        });
    }
}

/// All nonempty subsets of `0..n` as bitmasks in increasing order.
fn supports(n: usize) -> impl Iterator<Item = u32> {
    1..(1u32 << n)
}

/// For every support pair admitting an equilibrium, one representative that
/// maximizes the smallest support probability on each side.
fn support_enumeration(aux: &AuxiliaryGame) -> Result<Vec<(Vec<f64>, Vec<f64>)>, SolveError> {
    let m1 = aux.action_counts[0];
    let m2 = aux.action_counts[1];
    // u[p][a1][a2]
    let u: Vec<Vec<Vec<f64>>> = (0..2)
        .map(|p| {
            (0..m1)
                .map(|a1| (0..m2).map(|a2| aux.payoffs[a1 * m2 + a2][p]).collect())
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for s1 in supports(m1) {
        for s2 in supports(m2) {
            // x makes player 2 indifferent on s2 and no better off it.
            let Some(x) = side_program(m1, m2, s1, s2, |a1, a2| u[1][a1][a2])? else {
                continue;
            };
            let Some(y) = side_program(m2, m1, s2, s1, |a2, a1| u[0][a1][a2])? else {
                continue;
            };
            out.push((x, y));
        }
    }
    Ok(out)
}

/// Finds a mixed action with support exactly `own` (own `k` actions) that
/// makes the opponent indifferent across `theirs` and weakly worse off
/// outside it; `pay(mine, theirs)` is the opponent's payoff. Maximizes the
/// smallest probability on `own`.
fn side_program<F>(
    k: usize,
    m: usize,
    own: u32,
    theirs: u32,
    pay: F,
) -> Result<Option<Vec<f64>>, SolveError>
where
    F: Fn(usize, usize) -> f64,
{
    // Variables: x_0..x_{k-1}, w (free), t.
    let w = k;
    let t = k + 1;
    let mut objective = vec![0.0; k + 2];
    objective[t] = 1.0;
    let mut lp = LinearProgram::maximize(objective);
    lp.set_free(w);
    let mut sum = vec![0.0; k + 2];
    for a in 0..k {
        sum[a] = 1.0;
        let mut row = vec![0.0; k + 2];
        row[a] = 1.0;
        if own & (1 << a) != 0 {
            row[t] = -1.0;
            lp.constrain(row, Relation::Ge, 0.0);
        } else {
            lp.constrain(row, Relation::Eq, 0.0);
        }
    }
    lp.constrain(sum, Relation::Eq, 1.0);
    let mut cap = vec![0.0; k + 2];
    cap[t] = 1.0;
    lp.constrain(cap, Relation::Le, 1.0);
    for b in 0..m {
        let mut row: Vec<f64> = (0..k).map(|a| pay(a, b)).collect();
        row.push(-1.0);
        row.push(0.0);
        let rel = if theirs & (1 << b) != 0 {
            Relation::Eq
        } else {
            Relation::Le
        };
        lp.constrain(row, rel, 0.0);
    }
    match lp.solve() {
        crate::lp::LpOutcome::Optimal { x, .. } => {
            if x[t] <= 1e-9 {
                return Ok(None);
            }
            let mut p: Vec<f64> = (0..k)
                .map(|a| {
                    if own & (1 << a) != 0 {
                        x[a].max(0.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let mass: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= mass);
            Ok(Some(p))
        }
        crate::lp::LpOutcome::Infeasible => Ok(None),
        other => Err(SolveError::Lp(format!("support program: {other:?}"))),
    }
}

/// Sequential best-response dynamics with fictitious-play averaging; returns
/// the last pure profile if it is a fixed point, else the empirical mixture.
fn best_response_dynamics(aux: &AuxiliaryGame, start: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let players = aux.players();
    let mut current = start.clone();
    let mut counts: Vec<Vec<f64>> = start.clone();
    for round in 1..=2000 {
        let mut changed = false;
        for i in 0..players {
            let per_action = aux.action_payoffs(&current, i);
            let best = crate::minmax::argmax(&per_action);
            let current_value: f64 = per_action.iter().zip(&current[i]).map(|(u, x)| u * x).sum();
            if per_action[best] > current_value + 1e-12 || current[i][best] != 1.0 {
                if per_action[best] > current_value + 1e-12 {
                    changed = true;
                }
                current[i] = one_hot(aux.action_counts[i], best);
            }
            for (c, x) in counts[i].iter_mut().zip(&current[i]) {
                *c += x;
            }
        }
        if !changed && round > 1 {
            return current;
        }
    }
    counts
        .into_iter()
        .map(|c| {
            let m: f64 = c.iter().sum();
            c.into_iter().map(|v| v / m).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ValueMargin {
    /// `U_i(s; x) − v1_i(s)` per player.
    pub margins: Vec<f64>,
    pub holds: bool,
}

/// Checks `v1(s) ≤ U(s; x)` coordinatewise, within `tol_v`.
pub fn check_value_inequality(
    aux: &AuxiliaryGame,
    mixed: &[Vec<f64>],
    v1_at_s: &[f64],
    tol_v: f64,
) -> ValueMargin {
    let u = aux.payoff(mixed);
    let margins: Vec<f64> = u.iter().zip(v1_at_s).map(|(a, b)| a - b).collect();
    let holds = margins.iter().all(|&m| m >= -tol_v);
    ValueMargin { margins, holds }
}
