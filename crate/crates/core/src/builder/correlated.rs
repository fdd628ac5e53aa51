//! Stationary correlated variant: one correlated action per state.

use nalgebra::DMatrix;
use serde::Serialize;

use super::automata::tuning_threshold;
use super::{BlockLayout, Classification, DELTA_FLOOR, EXIT_SCALE};
use crate::chain::stopped_values;
use crate::error::BuildError;
use crate::frequencies::{payoff_of_frequency, stationary_frequency};
use crate::game::{StationaryCorrelated, StochasticGame};
use crate::structure::{mask, CommunicatingSet, Decomposition};

#[derive(Debug, Clone, Serialize)]
pub struct CorrelatedTuning {
    pub states: Vec<usize>,
    pub kind: String,
    /// Weight of the travel component (type A) or exit scale (type B).
    pub parameter: f64,
    /// Worst margin over entry states and players against the tuning goal.
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelatedSynthesis {
    pub profile: StationaryCorrelated,
    pub sets: Vec<CorrelatedTuning>,
    pub layout: BlockLayout,
}

/// Uniform mixture over the travel profiles towards every other state of
/// the set, or over all set-preserving profiles for a singleton. Under it
/// the chain restricted to the set is irreducible.
fn travel_mixture(game: &StochasticGame, set: &CommunicatingSet) -> Vec<Vec<f64>> {
    let n = game.states();
    let inside = mask(n, &set.states);
    let mut z = vec![vec![0.0; game.profiles()]; n];
    for &s in &set.states {
        let picks: Vec<usize> = if set.states.len() == 1 {
            (0..game.profiles())
                .filter(|&a| game.stays_in(s, a, &inside))
                .collect()
        } else {
            set.travel.iter().filter_map(|y| y.profile_at(s)).collect()
        };
        for &a in &picks {
            z[s][a] += 1.0 / picks.len() as f64;
        }
    }
    z
}

fn uniform_elsewhere(game: &StochasticGame, actions: &mut [Vec<f64>]) {
    let m = game.profiles() as f64;
    for row in actions.iter_mut() {
        if row.iter().sum::<f64>() == 0.0 {
            row.iter_mut().for_each(|w| *w = 1.0 / m);
        }
    }
}

fn worst_margin(values: &[Vec<f64>], goal: &[f64]) -> f64 {
    values
        .iter()
        .flat_map(|u| u.iter().zip(goal).map(|(x, c)| x - c))
        .fold(f64::INFINITY, f64::min)
}

/// Correlated actions on a type-A set: the normalized rows of
/// `(1 − δ) Σ β ρ^(l) + δ ρ_z`.
fn settle(
    game: &StochasticGame,
    set: &CommunicatingSet,
    plan: &crate::frequencies::TypeAPlan,
) -> Result<(Vec<Vec<f64>>, CorrelatedTuning), BuildError> {
    let n = game.states();
    let mut z = travel_mixture(game, set);
    uniform_elsewhere(game, &mut z);
    let z_profile = StationaryCorrelated { actions: z };
    let rho_z = stationary_frequency(game, &z_profile, set.states[0]).weights;
    let mut base = vec![vec![0.0; game.profiles()]; n];
    for (atom, &b) in plan.atoms.iter().zip(&plan.weights) {
        for &s in &set.states {
            for (x, &r) in base[s].iter_mut().zip(&atom.rho.weights[s]) {
                *x += b * r;
            }
        }
    }
    let goal = tuning_threshold(&plan.target, plan.slack);
    let covered = set
        .states
        .iter()
        .all(|&s| base[s].iter().sum::<f64>() > 0.0);
    let mut deltas = Vec::new();
    if covered {
        deltas.push(0.0);
    }
    let mut d = 0.5;
    while d >= DELTA_FLOOR {
        deltas.push(d);
        d /= 2.0;
    }
    let mut worst = f64::NEG_INFINITY;
    for delta in deltas {
        let mut actions = vec![vec![0.0; game.profiles()]; n];
        for &s in &set.states {
            let row: Vec<f64> = base[s]
                .iter()
                .zip(&rho_z[s])
                .map(|(b, r)| (1.0 - delta) * b + delta * r)
                .collect();
            let mass: f64 = row.iter().sum();
            actions[s] = row.iter().map(|x| x / mass).collect();
        }
        uniform_elsewhere(game, &mut actions);
        let tau = StationaryCorrelated { actions };
        let values: Vec<Vec<f64>> = set
            .states
            .iter()
            .map(|&s| payoff_of_frequency(game, &stationary_frequency(game, &tau, s)))
            .collect();
        worst = worst_margin(&values, &goal);
        if worst >= 0.0 {
            let rows = tau.actions;
            return Ok((
                rows,
                CorrelatedTuning {
                    states: set.states.clone(),
                    kind: "A".into(),
                    parameter: delta,
                    margin: worst,
                },
            ));
        }
    }
    Err(BuildError::DeltaSearch {
        set: set.states.clone(),
        floor: DELTA_FLOOR,
        detail: format!("long-run payoff still {worst:e} below the threshold"),
    })
}

/// Expected `v¹` right after the first exit play, from each state of the set.
pub(crate) fn exit_values(
    game: &StochasticGame,
    set: &[usize],
    actions: &[Vec<f64>],
    v1: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let inside = mask(game.states(), set);
    let k = set.len();
    let players = game.players();
    let mut p = DMatrix::zeros(k, k);
    let mut b = DMatrix::zeros(k, players + 1);
    for (r, &s) in set.iter().enumerate() {
        for (a, &w) in actions[s].iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let q = game.transition(s, a);
            if game.stays_in(s, a, &inside) {
                for (c, &t) in set.iter().enumerate() {
                    p[(r, c)] += w * q[t];
                }
            } else {
                b[(r, players)] += w;
                for (t, &pt) in q.iter().enumerate() {
                    for i in 0..players {
                        b[(r, i)] += w * pt * v1[t][i];
                    }
                }
            }
        }
    }
    let h = stopped_values(&p, &b);
    (0..k)
        .map(|r| {
            let stop = h[(r, players)];
            (0..players)
                .map(|i| {
                    if stop > 0.0 {
                        h[(r, i)] / stop
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect()
        })
        .collect()
}

/// Correlated actions on a type-B set: `τ(s) = (1 − W(s)) z(s) + Σ w_l a^(l)`
/// where `a^(l)` is the exit's deviation profile and
/// `w_l ∝ β_l / (π_z(s^(l)) p_l)` with `p_l` its leaving probability, so that
/// exits happen with frequencies close to `β` and exactly `β` when they
/// share one state.
fn leave(
    game: &StochasticGame,
    set: &CommunicatingSet,
    plan: &super::ExitPlan,
    v1: &[Vec<f64>],
    epsilon: f64,
) -> Result<(Vec<Vec<f64>>, CorrelatedTuning), BuildError> {
    let n = game.states();
    let mut z = travel_mixture(game, set);
    if set.states.len() == 1 {
        // A singleton needs no travel: staying on the companions keeps the
        // deviation values those exits were chosen for.
        let s = set.states[0];
        let total: f64 = plan.exits.iter().map(|e| e.weight).sum();
        let mut row = vec![0.0; game.profiles()];
        for e in &plan.exits {
            let joint = game.product(&e.exit.perturbed(game, 0.0));
            for (x, j) in row.iter_mut().zip(joint) {
                *x += e.weight / total * j;
            }
        }
        z[s] = row;
    }
    uniform_elsewhere(game, &mut z);
    let z_profile = StationaryCorrelated { actions: z.clone() };
    let rho_z = stationary_frequency(game, &z_profile, set.states[0]);
    let pi: Vec<f64> = (0..n).map(|s| rho_z.marginal(s)).collect();
    // Aim at the value itself when the plan has room for it.
    let lift = if plan.slack > epsilon {
        (epsilon + plan.slack) / 2.0
    } else if plan.slack > 2e-9 {
        plan.slack / 2.0
    } else {
        -1e-9
    };
    let goal: Vec<f64> = plan.target.iter().map(|c| c + lift).collect();
    let mut per_state = vec![0.0; n];
    let exit_joint: Vec<Vec<f64>> = plan
        .exits
        .iter()
        .map(|e| game.product(&e.exit.perturbed(game, 1.0)))
        .collect();
    for e in &plan.exits {
        per_state[e.exit.state] += e.weight / (pi[e.exit.state] * e.exit.leave);
    }
    let heaviest = per_state.iter().copied().fold(0.0, f64::max);
    let mut kappa = EXIT_SCALE / heaviest;
    let floor = DELTA_FLOOR * kappa;
    let mut worst = f64::NEG_INFINITY;
    while kappa >= floor {
        let mut actions = z.clone();
        for &s in &set.states {
            let total = kappa * per_state[s];
            actions[s].iter_mut().for_each(|w| *w *= 1.0 - total);
        }
        for (e, joint) in plan.exits.iter().zip(&exit_joint) {
            let w = kappa * e.weight / (pi[e.exit.state] * e.exit.leave);
            for (x, &j) in actions[e.exit.state].iter_mut().zip(joint) {
                *x += w * j;
            }
        }
        let values = exit_values(game, &set.states, &actions, v1);
        worst = worst_margin(&values, &goal);
        if worst >= 0.0 {
            return Ok((
                actions,
                CorrelatedTuning {
                    states: set.states.clone(),
                    kind: "B".into(),
                    parameter: kappa,
                    margin: worst,
                },
            ));
        }
        kappa /= 2.0;
    }
    Err(BuildError::DeltaSearch {
        set: set.states.clone(),
        floor,
        detail: format!("expected exit value still {worst:e} below the goal"),
    })
}

/// Stationary correlated profile: transient states keep their one-shot
/// equilibrium, and only the communicating sets are amended.
pub fn build_correlated_stationary(
    game: &StochasticGame,
    decomposition: &Decomposition,
    classes: &[Classification],
    v1: &[Vec<f64>],
    epsilon: f64,
) -> Result<CorrelatedSynthesis, BuildError> {
    let n = game.states();
    let mut actions = vec![vec![0.0; game.profiles()]; n];
    for &s in &decomposition.transient {
        let x = decomposition.transient_profile[s]
            .as_ref()
            .expect("transient states have a profile");
        actions[s] = game.product(x);
    }
    let mut sets = Vec::with_capacity(decomposition.sets.len());
    for (set, class) in decomposition.sets.iter().zip(classes) {
        let (rows, tuning) = match class {
            Classification::TypeA(plan) => settle(game, set, plan)?,
            Classification::TypeB(plan) => leave(game, set, plan, v1, epsilon)?,
            Classification::Unclassifiable { .. } => {
                return Err(BuildError::Unclassifiable {
                    set: set.states.clone(),
                })
            }
        };
        for &s in &set.states {
            actions[s] = rows[s].clone();
        }
        sets.push(tuning);
    }
    Ok(CorrelatedSynthesis {
        profile: StationaryCorrelated { actions },
        sets,
        layout: BlockLayout::new(decomposition, classes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::exit::type_b_feasibility;
    use crate::structure::travel_strategy;

    #[test]
    fn sorin_exit_frequencies_are_exact() {
        let g = StochasticGame::from_json(include_str!("../../games/sorin.json")).unwrap();
        let v1 = vec![vec![2.0 / 3.0, 0.5], vec![0.0, 1.0], vec![2.0, 0.0]];
        let plan =
            type_b_feasibility(&g, &[0], &v1, &[2.0 / 3.0 - 0.05, 0.45], EXIT_SCALE).unwrap();
        let set = CommunicatingSet {
            states: vec![0],
            value: v1[0].clone(),
            travel: vec![travel_strategy(&g, &[0], &[0]).unwrap()],
        };
        let (rows, _) = leave(&g, &set, &plan, &v1, 0.05).unwrap();
        let values = exit_values(&g, &[0], &rows, &v1);
        let expected = plan.expected_continuation();
        assert!((values[0][0] - expected[0]).abs() < 1e-9);
        assert!((values[0][1] - expected[1]).abs() < 1e-9);
        // Exit weights relative to each other match β.
        let bl = g.parse_profile_key("B/L").unwrap();
        let br = g.parse_profile_key("B/R").unwrap();
        let share = rows[0][bl] / (rows[0][bl] + rows[0][br]);
        assert!((share - plan.exits[0].weight).abs() < 1e-12);
    }
}
