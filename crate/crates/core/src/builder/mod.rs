//! Classification of communicating sets into types A and B, synthesis of
//! the per-set automata and assembly of the global acceptable profile.

pub mod automata;
pub mod correlated;
pub mod exit;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::automaton::{JointAutomaton, Node, Output};
use crate::error::{BuildError, StructureError};
use crate::frequencies::{
    enumerate_recurrent_points, max_min_slack, mix, type_a_feasibility, RecurrentPoint, TypeAPlan,
};
use crate::game::StochasticGame;
use crate::one_shot::EquilibriumSet;
use crate::structure::{CommunicatingSet, Decomposition};

pub use automata::{
    build_mixed_singleton, build_type_a_automaton, build_type_b_automaton, tune_type_a,
    BlockAutomaton, Next,
};
pub use correlated::{build_correlated_stationary, CorrelatedSynthesis};
use exit::pure_continuation;
pub use exit::{
    admissible_exits, companion, continuation_value, exits, first_exit_distribution, mixed_exits,
    plan_exits, solve_eta, type_b_feasibility, Exit, ExitCandidate, ExitCertificate, ExitMove,
    ExitPlan, PlannedExit,
};

pub const DEFAULT_EPSILON: f64 = 0.05;
/// Probability that some exit is played in one pass over the phases.
pub const EXIT_SCALE: f64 = 0.1;
/// Smallest tuning parameter tried before giving up.
pub const DELTA_FLOOR: f64 = 1e-6;
/// Deviation gain still counted as none.
pub const SAFE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub enum Classification {
    TypeA(TypeAPlan),
    TypeB(ExitPlan),
    Unclassifiable {
        /// Best smallest slack of the type-A program, if it has any point.
        type_a_slack: Option<f64>,
        exit: ExitCertificate,
    },
}

impl Classification {
    pub fn kind(&self) -> &'static str {
        match self {
            Classification::TypeA(_) => "A",
            Classification::TypeB(_) => "B",
            Classification::Unclassifiable { .. } => "unclassifiable",
        }
    }
}

/// Target of both programs: the largest `v¹_i` on the set minus `ε`.
pub fn set_target(set: &[usize], v1: &[Vec<f64>], epsilon: f64) -> Vec<f64> {
    let players = v1.first().map_or(0, Vec::len);
    (0..players)
        .map(|i| {
            set.iter()
                .map(|&s| v1[s][i])
                .fold(f64::NEG_INFINITY, f64::max)
                - epsilon
        })
        .collect()
}

/// Largest amount by which a unilateral deviation from `x` at `s` lifts a
/// player's expected `v¹` above `ceiling`.
pub fn deviation_gain(
    game: &StochasticGame,
    v1: &[Vec<f64>],
    s: usize,
    x: &[Vec<f64>],
    ceiling: &[f64],
) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..game.players() {
        for b in 0..game.action_count(i) {
            let mut y = x.to_vec();
            y[i] = vec![0.0; game.action_count(i)];
            y[i][b] = 1.0;
            let u = continuation_value(game, v1, s, &game.product(&y));
            worst = worst.max(u[i] - ceiling[i]);
        }
    }
    worst
}

fn pure_actions(game: &StochasticGame, a: usize) -> Vec<Vec<f64>> {
    game.profile_actions(a)
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let mut x = vec![0.0; game.action_count(i)];
            x[b] = 1.0;
            x
        })
        .collect()
}

/// Player whose action is the only one varying across the atoms of a
/// one-state plan, so that the plan is played by that player mixing.
pub fn mixing_player(game: &StochasticGame, set: &[usize], plan: &TypeAPlan) -> Option<usize> {
    let &[s] = set else {
        return None;
    };
    let profiles: Vec<usize> = plan
        .atoms
        .iter()
        .map(|p| p.choice[s])
        .collect::<Option<_>>()?;
    if profiles.len() < 2 {
        return None;
    }
    (0..game.players()).find(|&j| {
        profiles
            .iter()
            .all(|&a| game.deviate(a, j, 0) == game.deviate(profiles[0], j, 0))
    })
}

/// On a one-state set, one player mixing over staying actions while the
/// others keep fixed actions. The weights maximize the smallest slack over
/// the target and over `ε`-individual rationality: no deviation may lift a
/// player's expected `v¹` above their payoff plus `ε`. Both are linear in
/// the weights because only one player mixes.
fn singleton_mixture(
    game: &StochasticGame,
    set: &[usize],
    v1: &[Vec<f64>],
    points: &[RecurrentPoint],
    target: &[f64],
    epsilon: f64,
) -> Option<TypeAPlan> {
    let &[s] = set else {
        return None;
    };
    let players = game.players();
    let mut best: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    for j in 0..players {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, p) in points.iter().enumerate() {
            if let Some(a) = p.choice[s] {
                groups.entry(game.deviate(a, j, 0)).or_default().push(k);
            }
        }
        for members in groups.values().filter(|m| m.len() > 1) {
            let mut bounds = target.to_vec();
            let extended: Vec<Vec<f64>> = members
                .iter()
                .map(|&k| {
                    let a = points[k].choice[s].expect("grouped points play at s");
                    let mut row = points[k].payoff.clone();
                    for i in 0..players {
                        for b in 0..game.action_count(i) {
                            let deviation = pure_continuation(game, v1, s, game.deviate(a, i, b));
                            row.push(points[k].payoff[i] + epsilon - deviation[i]);
                        }
                    }
                    row
                })
                .collect();
            bounds.resize(extended[0].len(), 0.0);
            let Some((beta, t)) = max_min_slack(&extended, &bounds) else {
                continue;
            };
            if t >= -1e-12 && best.as_ref().is_none_or(|b| t > b.2) {
                best = Some((members.clone(), beta, t));
            }
        }
    }
    let (members, beta, _) = best?;
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (&k, &w) in members.iter().zip(&beta) {
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

/// Type A if some mixture of recurrent points reaches the target, else
/// type B if some mixture of exits does.
///
/// Within each type, points and exits that no player can leave profitably
/// (no deviation lifts `v¹` above its largest value on the set) are tried
/// first. On one-state sets a single player's mixture that is individually
/// rational comes next.
pub fn classify_set(
    game: &StochasticGame,
    set: &[usize],
    v1: &[Vec<f64>],
    equilibria: &[EquilibriumSet],
    epsilon: f64,
) -> Result<Classification, StructureError> {
    let target = set_target(set, v1, epsilon);
    let ceiling: Vec<f64> = target.iter().map(|c| c + epsilon).collect();
    let points = enumerate_recurrent_points(game, set)?;
    let safe: Vec<_> = points
        .iter()
        .filter(|p| {
            p.class.iter().all(|&s| {
                let a = p.choice[s].expect("class states have a profile");
                deviation_gain(game, v1, s, &pure_actions(game, a), &ceiling) <= SAFE_TOL
            })
        })
        .cloned()
        .collect();
    let plan = type_a_feasibility(&safe, &target)
        .or_else(|| singleton_mixture(game, set, v1, &points, &target, epsilon))
        .or_else(|| type_a_feasibility(&points, &target));
    if let Some(plan) = plan {
        return Ok(Classification::TypeA(plan));
    }
    let mut candidates = mixed_exits(game, set, v1, equilibria);
    candidates.extend(admissible_exits(game, set, v1));
    let safe: Vec<_> = candidates
        .iter()
        .filter(|e| {
            deviation_gain(game, v1, e.state, &e.companion_actions(game), &ceiling) <= SAFE_TOL
        })
        .cloned()
        .collect();
    if let Ok(plan) = plan_exits(safe, &target, EXIT_SCALE) {
        return Ok(Classification::TypeB(plan));
    }
    match plan_exits(candidates, &target, EXIT_SCALE) {
        Ok(plan) => Ok(Classification::TypeB(plan)),
        Err(exit) => {
            let payoffs: Vec<Vec<f64>> = points.iter().map(|p| p.payoff.clone()).collect();
            Ok(Classification::Unclassifiable {
                type_a_slack: max_min_slack(&payoffs, &target).map(|(_, t)| t),
                exit,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlockKind {
    Transient,
    /// Type-A set: play stays forever.
    Settled,
    /// Type-B set: play leaves through planned exits.
    Exiting,
}

/// Which block each game state belongs to.
#[derive(Debug, Clone, Serialize)]
pub struct BlockLayout {
    pub kind: Vec<BlockKind>,
    pub set_of: Vec<Option<usize>>,
    pub sets: Vec<Vec<usize>>,
}

impl BlockLayout {
    pub fn new(decomposition: &Decomposition, classes: &[Classification]) -> Self {
        let kind = decomposition
            .set_of
            .iter()
            .map(|k| match k.map(|k| &classes[k]) {
                None => BlockKind::Transient,
                Some(Classification::TypeA(_)) => BlockKind::Settled,
                Some(_) => BlockKind::Exiting,
            })
            .collect();
        BlockLayout {
            kind,
            set_of: decomposition.set_of.clone(),
            sets: decomposition
                .sets
                .iter()
                .map(|c| c.states.clone())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SetSynthesis {
    pub states: Vec<usize>,
    pub classification: Classification,
    /// Phase-advance parameter of a type-A automaton.
    pub delta: Option<f64>,
    pub nodes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Synthesis {
    pub epsilon: f64,
    pub automaton: JointAutomaton,
    pub sets: Vec<SetSynthesis>,
    pub layout: BlockLayout,
}

/// Classifies every set of the decomposition.
pub fn classify_all(
    game: &StochasticGame,
    decomposition: &Decomposition,
    v1: &[Vec<f64>],
    equilibria: &[EquilibriumSet],
    epsilon: f64,
) -> Result<Vec<Classification>, StructureError> {
    decomposition
        .sets
        .par_iter()
        .map(|c| classify_set(game, &c.states, v1, equilibria, epsilon))
        .collect()
}

/// Builds the acceptable profile: transient states play their one-shot
/// equilibrium, type-A sets run their phase automaton forever and type-B
/// sets run their exit automaton until an exit is played, after which play
/// is dispatched afresh on the realized state.
pub fn synthesize(
    game: &StochasticGame,
    decomposition: &Decomposition,
    v1: &[Vec<f64>],
    equilibria: &[EquilibriumSet],
    epsilon: f64,
) -> Result<Synthesis, BuildError> {
    let classes = classify_all(game, decomposition, v1, equilibria, epsilon)?;
    if let Some(k) = classes
        .iter()
        .position(|c| matches!(c, Classification::Unclassifiable { .. }))
    {
        return Err(BuildError::Unclassifiable {
            set: decomposition.sets[k].states.clone(),
        });
    }
    let built: Vec<(BlockAutomaton, Option<f64>)> = decomposition
        .sets
        .par_iter()
        .zip(&classes)
        .map(|(set, class)| build_block(game, set, class))
        .collect::<Result<_, _>>()?;
    let automaton = assemble_profile(
        game,
        decomposition,
        &built.iter().map(|b| b.0.clone()).collect::<Vec<_>>(),
    );
    let sets = decomposition
        .sets
        .iter()
        .zip(&classes)
        .zip(&built)
        .map(|((set, class), (block, delta))| SetSynthesis {
            states: set.states.clone(),
            classification: class.clone(),
            delta: *delta,
            nodes: block.nodes.len(),
        })
        .collect();
    Ok(Synthesis {
        epsilon,
        automaton,
        sets,
        layout: BlockLayout::new(decomposition, &classes),
    })
}

fn build_block(
    game: &StochasticGame,
    set: &CommunicatingSet,
    class: &Classification,
) -> Result<(BlockAutomaton, Option<f64>), BuildError> {
    match class {
        Classification::TypeA(plan) => {
            if let Some(j) = mixing_player(game, &set.states, plan) {
                return Ok((build_mixed_singleton(game, set, plan, j), None));
            }
            let (block, delta) = tune_type_a(game, set, plan, DELTA_FLOOR)?;
            Ok((block, Some(delta)))
        }
        Classification::TypeB(plan) => Ok((build_type_b_automaton(game, set, plan), None)),
        Classification::Unclassifiable { .. } => Err(BuildError::Unclassifiable {
            set: set.states.clone(),
        }),
    }
}

/// Joins the transient profile and the per-set automata into one machine.
/// Transient states come first, then each block's nodes in set order.
pub fn assemble_profile(
    game: &StochasticGame,
    decomposition: &Decomposition,
    blocks: &[BlockAutomaton],
) -> JointAutomaton {
    let n = game.states();
    let transient = &decomposition.transient;
    let mut offsets = Vec::with_capacity(blocks.len());
    let mut next_free = transient.len();
    for b in blocks {
        offsets.push(next_free);
        next_free += b.nodes.len();
    }
    let mut initial = vec![0; n];
    for (k, &s) in transient.iter().enumerate() {
        initial[s] = k;
    }
    for (b, &off) in blocks.iter().zip(&offsets) {
        for &s in &b.set {
            initial[s] = off + b.entry[s].expect("every set state has an entry");
        }
    }

    let mut nodes = Vec::with_capacity(next_free);
    for &s in transient {
        let x = decomposition.transient_profile[s]
            .clone()
            .expect("transient states have a profile");
        nodes.push(Node {
            state: s,
            label: format!("transient {}", game.state_name(s)),
            output: Output::Product(x),
            next: vec![(0..n).map(|t| vec![(initial[t], 1.0)]).collect(); game.profiles()],
        });
    }
    for (k, (b, &off)) in blocks.iter().zip(&offsets).enumerate() {
        for node in &b.nodes {
            let next = node
                .next
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|succ| {
                            succ.iter()
                                .map(|&(to, p)| match to {
                                    Next::Local(j) => (off + j, p),
                                    Next::Dispatch(t) => (initial[t], p),
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            nodes.push(Node {
                state: node.state,
                label: format!("set {k} {}", node.label),
                output: node.output.clone(),
                next,
            });
        }
    }
    JointAutomaton {
        nodes,
        initial,
        product_form: true,
    }
}
