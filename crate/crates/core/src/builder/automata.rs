//! Per-set automata: exit automata for type-B sets and phase-cycling
//! automata for type-A sets.

use nalgebra::DMatrix;
use serde::Serialize;

use super::exit::{ExitMove, ExitPlan};
use crate::automaton::Output;
use crate::chain::{stopped_values, CesaroLimit};
use crate::error::BuildError;
use crate::frequencies::TypeAPlan;
use crate::game::StochasticGame;
use crate::structure::{mask, travel_strategy, CommunicatingSet, TravelStrategy};

/// Successor of a block node: another node of the block, or hand control
/// back to the global dispatcher at game state `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Next {
    Local(usize),
    Dispatch(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockNode {
    pub state: usize,
    pub label: String,
    pub output: Output,
    /// `next[a][t]`
    pub next: Vec<Vec<Vec<(Next, f64)>>>,
}

/// Automaton run while play is inside one communicating set.
#[derive(Debug, Clone, Serialize)]
pub struct BlockAutomaton {
    pub set: Vec<usize>,
    pub nodes: Vec<BlockNode>,
    /// Node to start in when play enters the set at a given game state.
    pub entry: Vec<Option<usize>>,
}

/// What happens from one entry node of a block until it hands back control.
#[derive(Debug, Clone, Serialize)]
pub struct StopAnalysis {
    pub state: usize,
    /// Probability of ever handing back control.
    pub stop: f64,
    /// Expected `v¹` at the game state where control is handed back.
    pub value: Vec<f64>,
}

impl BlockAutomaton {
    /// Substochastic chain on the block's nodes plus, per node, the expected
    /// `v¹` mass collected when control is handed back.
    fn local_chain(
        &self,
        game: &StochasticGame,
        v1: &[Vec<f64>],
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let m = self.nodes.len();
        let players = game.players();
        let mut p = DMatrix::zeros(m, m);
        let mut stop = DMatrix::zeros(m, players + 1);
        let mut reward = DMatrix::zeros(m, players);
        for (k, node) in self.nodes.iter().enumerate() {
            let joint = node.output.joint(game);
            let u = game.mix_payoff(node.state, &joint);
            for i in 0..players {
                reward[(k, i)] = u[i];
            }
            for (a, &w) in joint.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (t, &q) in game.transition(node.state, a).iter().enumerate() {
                    if q == 0.0 {
                        continue;
                    }
                    for &(next, r) in &node.next[a][t] {
                        let mass = w * q * r;
                        match next {
                            Next::Local(j) => p[(k, j)] += mass,
                            Next::Dispatch(t2) => {
                                stop[(k, 0)] += mass;
                                for i in 0..players {
                                    stop[(k, i + 1)] += mass * v1[t2][i];
                                }
                            }
                        }
                    }
                }
            }
        }
        (p, stop, reward)
    }

    /// Stopping probability and expected `v¹` at hand-back from each entry.
    pub fn stop_analysis(&self, game: &StochasticGame, v1: &[Vec<f64>]) -> Vec<StopAnalysis> {
        let (p, b, _) = self.local_chain(game, v1);
        let h = stopped_values(&p, &b);
        self.set
            .iter()
            .map(|&s| {
                let k = self.entry[s].expect("every state of the set has an entry");
                let stop = h[(k, 0)];
                StopAnalysis {
                    state: s,
                    stop,
                    value: (1..h.ncols())
                        .map(|j| if stop > 0.0 { h[(k, j)] / stop } else { 0.0 })
                        .collect(),
                }
            })
            .collect()
    }

    /// Limit average payoff from each entry, assuming play never leaves.
    pub fn long_run_payoff(&self, game: &StochasticGame) -> Vec<Vec<f64>> {
        let zero = vec![vec![0.0; game.players()]; game.states()];
        let (p, _, r) = self.local_chain(game, &zero);
        let limit = CesaroLimit::new(&p).average_reward(&r);
        self.set
            .iter()
            .map(|&s| limit[self.entry[s].expect("entry")].clone())
            .collect()
    }

    /// Distribution of the first planned exit event from each entry, by
    /// absorption on the block chain. Nodes of phase `l` are numbered
    /// `l·|C| ..`, as built by [`build_type_b_automaton`].
    pub fn first_exit_distribution(&self, game: &StochasticGame, plan: &ExitPlan) -> Vec<Vec<f64>> {
        let m = self.nodes.len();
        let c = self.set.len();
        let inside = mask(game.states(), &self.set);
        let mut p = DMatrix::zeros(m, m);
        let mut b = DMatrix::zeros(m, plan.exits.len());
        for (k, node) in self.nodes.iter().enumerate() {
            let l = k / c;
            let joint = node.output.joint(game);
            for (a, &w) in joint.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                if exit_profile(plan, l) == Some(a) && plan.exits[l].exit.state == node.state {
                    b[(k, l)] += w;
                    continue;
                }
                for (t, &q) in game.transition(node.state, a).iter().enumerate() {
                    if !inside[t] {
                        b[(k, l)] += w * q;
                        continue;
                    }
                    for &(next, r) in &node.next[a][t] {
                        if let Next::Local(j) = next {
                            p[(k, j)] += w * q * r;
                        }
                    }
                }
            }
        }
        let h = stopped_values(&p, &b);
        self.set
            .iter()
            .map(|&s| {
                let k = self.entry[s].expect("entry");
                (0..plan.exits.len()).map(|l| h[(k, l)]).collect()
            })
            .collect()
    }
}

fn exit_profile(plan: &ExitPlan, l: usize) -> Option<usize> {
    match plan.exits[l].exit.play {
        ExitMove::Pure { profile, .. } => Some(profile),
        ExitMove::Mixed { .. } => None,
    }
}

fn pure_output(game: &StochasticGame, a: usize) -> Output {
    Output::pure(game, a)
}

fn stay_or_dispatch(inside: &[bool], t: usize, local: usize) -> Next {
    if inside[t] {
        Next::Local(local)
    } else {
        Next::Dispatch(t)
    }
}

/// Exit automaton of a type-B set. Phase `l` travels to the exit state
/// `s^(l)`, where only the exit's deviating player mixes between the
/// companion and the exit action. The exit event hands control back;
/// otherwise play moves to the next phase.
pub fn build_type_b_automaton(
    game: &StochasticGame,
    set: &CommunicatingSet,
    plan: &ExitPlan,
) -> BlockAutomaton {
    let n = game.states();
    let states = &set.states;
    let c = states.len();
    let inside = mask(n, states);
    let pos = |t: usize| states.iter().position(|&x| x == t).expect("state in set");
    let phases = plan.exits.len();
    let mut nodes = Vec::with_capacity(phases * c);
    for (l, planned) in plan.exits.iter().enumerate() {
        let exit = &planned.exit;
        let travel = &set.travel[pos(exit.state)];
        let following = (l + 1) % phases;
        let leaving_profile = exit_profile(plan, l);
        for &s in states {
            let label = format!("B phase {l} at {}", game.state_name(s));
            let mut next = vec![vec![Vec::new(); n]; game.profiles()];
            let output = if s == exit.state {
                Output::Product(exit.perturbed(game, planned.deviation()))
            } else {
                pure_output(
                    game,
                    travel.profile_at(s).expect("travel defined off target"),
                )
            };
            for (a, row) in next.iter_mut().enumerate() {
                for (t, succ) in row.iter_mut().enumerate() {
                    let target = if !inside[t] || (s == exit.state && leaving_profile == Some(a)) {
                        Next::Dispatch(t)
                    } else if s == exit.state {
                        Next::Local(following * c + pos(t))
                    } else {
                        Next::Local(l * c + pos(t))
                    };
                    succ.push((target, 1.0));
                }
            }
            nodes.push(BlockNode {
                state: s,
                label,
                output,
                next,
            });
        }
    }
    let mut entry = vec![None; n];
    for (k, &s) in states.iter().enumerate() {
        entry[s] = Some(k);
    }
    BlockAutomaton {
        set: states.clone(),
        nodes,
        entry,
    }
}

/// Phase-cycling automaton of a type-A set. Phase `l` travels to the
/// recurrent class of atom `l` and plays its pure profile there; each stage
/// spent in the class advances the phase with probability `δ/β_l`.
pub fn build_type_a_automaton(
    game: &StochasticGame,
    set: &CommunicatingSet,
    plan: &TypeAPlan,
    delta: f64,
) -> Result<BlockAutomaton, BuildError> {
    let n = game.states();
    let states = &set.states;
    let c = states.len();
    let inside = mask(n, states);
    let pos = |t: usize| states.iter().position(|&x| x == t).expect("state in set");
    let phases = plan.atoms.len();
    let travels: Vec<TravelStrategy> = plan
        .atoms
        .iter()
        .map(|atom| travel_strategy(game, states, &atom.class))
        .collect::<Result<_, _>>()?;
    let mut nodes = Vec::with_capacity(phases * c);
    for (l, atom) in plan.atoms.iter().enumerate() {
        let advance = if phases > 1 {
            delta / plan.weights[l]
        } else {
            0.0
        };
        let following = (l + 1) % phases;
        for &s in states {
            let in_class = atom.class.contains(&s);
            let a_here = if in_class {
                atom.choice[s].expect("class states have a profile")
            } else {
                travels[l].profile_at(s).expect("travel defined off target")
            };
            let mut next = vec![vec![Vec::new(); n]; game.profiles()];
            for row in next.iter_mut() {
                for (t, succ) in row.iter_mut().enumerate() {
                    if !inside[t] {
                        succ.push((Next::Dispatch(t), 1.0));
                    } else if in_class && advance > 0.0 {
                        succ.push((Next::Local(following * c + pos(t)), advance));
                        succ.push((Next::Local(l * c + pos(t)), 1.0 - advance));
                    } else {
                        succ.push((stay_or_dispatch(&inside, t, l * c + pos(t)), 1.0));
                    }
                }
            }
            nodes.push(BlockNode {
                state: s,
                label: format!("A phase {l} at {}", game.state_name(s)),
                output: pure_output(game, a_here),
                next,
            });
        }
    }
    let mut entry = vec![None; n];
    for (k, &s) in states.iter().enumerate() {
        entry[s] = Some(k);
    }
    Ok(BlockAutomaton {
        set: states.clone(),
        nodes,
        entry,
    })
}

/// One-node automaton for a plan on a one-state set whose atoms differ only
/// in `player`'s action: that player mixes with the plan's weights.
pub fn build_mixed_singleton(
    game: &StochasticGame,
    set: &CommunicatingSet,
    plan: &TypeAPlan,
    player: usize,
) -> BlockAutomaton {
    let n = game.states();
    let s = set.states[0];
    let first = plan.atoms[0].choice[s].expect("atoms play at the state");
    let mut mixed: Vec<Vec<f64>> = (0..game.players())
        .map(|i| {
            let mut x = vec![0.0; game.action_count(i)];
            x[game.action_of(first, i)] = 1.0;
            x
        })
        .collect();
    mixed[player] = vec![0.0; game.action_count(player)];
    for (atom, &w) in plan.atoms.iter().zip(&plan.weights) {
        let a = atom.choice[s].expect("atoms play at the state");
        mixed[player][game.action_of(a, player)] += w;
    }
    let next = (0..game.profiles())
        .map(|_| {
            (0..n)
                .map(|t| {
                    vec![(
                        if t == s {
                            Next::Local(0)
                        } else {
                            Next::Dispatch(t)
                        },
                        1.0,
                    )]
                })
                .collect()
        })
        .collect();
    let mut entry = vec![None; n];
    entry[s] = Some(0);
    BlockAutomaton {
        set: vec![s],
        nodes: vec![BlockNode {
            state: s,
            label: format!("A mixed at {}", game.state_name(s)),
            output: Output::Product(mixed),
            next,
        }],
        entry,
    }
}

/// Threshold the tuned long-run quantity must clear: half the plan's slack
/// above the target, or the target itself (up to rounding) without slack.
pub(crate) fn tuning_threshold(target: &[f64], slack: f64) -> Vec<f64> {
    let lift = if slack > 2e-9 { slack / 2.0 } else { -1e-9 };
    target.iter().map(|c| c + lift).collect()
}

/// Type-A automaton with the largest `δ = min β / 2^k` whose long-run
/// payoff clears the tuning threshold from every entry.
pub fn tune_type_a(
    game: &StochasticGame,
    set: &CommunicatingSet,
    plan: &TypeAPlan,
    floor: f64,
) -> Result<(BlockAutomaton, f64), BuildError> {
    let threshold = tuning_threshold(&plan.target, plan.slack);
    let min_beta = plan.weights.iter().copied().fold(f64::INFINITY, f64::min);
    let mut delta = min_beta / 2.0;
    let mut worst = f64::NEG_INFINITY;
    while delta >= floor {
        let block = build_type_a_automaton(game, set, plan, delta)?;
        worst = block
            .long_run_payoff(game)
            .iter()
            .flat_map(|u| u.iter().zip(&threshold).map(|(x, c)| x - c))
            .fold(f64::INFINITY, f64::min);
        if worst >= 0.0 || plan.atoms.len() == 1 {
            return Ok((block, delta));
        }
        delta /= 2.0;
    }
    Err(BuildError::DeltaSearch {
        set: set.states.clone(),
        floor,
        detail: format!("long-run payoff still {worst:e} below the threshold"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::exit::type_b_feasibility;
    use crate::frequencies::{enumerate_recurrent_points, type_a_feasibility};
    use crate::structure::travel_strategy;

    fn communicating(game: &StochasticGame, states: Vec<usize>) -> CommunicatingSet {
        let travel = states
            .iter()
            .map(|&t| travel_strategy(game, &states, &[t]).unwrap())
            .collect();
        CommunicatingSet {
            value: vec![0.0; game.players()],
            states,
            travel,
        }
    }

    #[test]
    fn sorin_exit_automaton_hits_weights() {
        let g = StochasticGame::from_json(include_str!("../../games/sorin.json")).unwrap();
        let v1 = vec![vec![2.0 / 3.0, 0.5], vec![0.0, 1.0], vec![2.0, 0.0]];
        let plan = type_b_feasibility(&g, &[0], &v1, &[2.0 / 3.0 - 0.05, 0.45], 0.1).unwrap();
        let block = build_type_b_automaton(&g, &communicating(&g, vec![0]), &plan);
        assert_eq!(block.nodes.len(), 2);
        let dist = block.first_exit_distribution(&g, &plan);
        assert!((dist[0][0] - plan.exits[0].weight).abs() < 1e-9);
        let stop = block.stop_analysis(&g, &v1);
        assert!((stop[0].stop - 1.0).abs() < 1e-12);
        let expected = plan.expected_continuation();
        assert!((stop[0].value[0] - expected[0]).abs() < 1e-9);
    }

    #[test]
    fn two_cycles_average_out() {
        // One state, two self-loop actions with payoffs (1,0) and (0,1).
        let g = StochasticGame::from_fn(1, &[2, 1], |_, a| {
            (
                if a[0] == 0 {
                    vec![1.0, 0.0]
                } else {
                    vec![0.0, 1.0]
                },
                vec![1.0],
            )
        })
        .unwrap();
        let set = communicating(&g, vec![0]);
        let points = enumerate_recurrent_points(&g, &[0]).unwrap();
        let plan = type_a_feasibility(&points, &[0.4, 0.4]).unwrap();
        for delta in [0.1, 0.01, 0.001] {
            let block = build_type_a_automaton(&g, &set, &plan, delta).unwrap();
            let u = &block.long_run_payoff(&g)[0];
            assert!((u[0] - 0.5).abs() < 1e-9 && (u[1] - 0.5).abs() < 1e-9);
        }
    }
}
