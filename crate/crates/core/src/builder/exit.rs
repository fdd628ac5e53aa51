//! Exits from communicating sets, companion profiles and exit plans.

use serde::Serialize;

use crate::error::BuildError;
use crate::frequencies::{max_min_slack, mix, reduce_upward};
use crate::game::StochasticGame;
use crate::one_shot::EquilibriumSet;
use crate::structure::mask;

/// A pair `(s, a)` with `s ∈ C` under which play may leave `C`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exit {
    pub state: usize,
    pub profile: usize,
    /// `1 − q(C | s, a)`.
    pub leave: f64,
}

/// All exits of `set`, in (state, profile) order, and the minimal exit
/// mass `Q_C` (None when the set is closed under every profile).
pub fn exits(game: &StochasticGame, set: &[usize]) -> (Vec<Exit>, Option<f64>) {
    let inside = mask(game.states(), set);
    let mut sorted = set.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::new();
    for &s in &sorted {
        for a in 0..game.profiles() {
            if !game.stays_in(s, a, &inside) {
                let leave = game
                    .transition(s, a)
                    .iter()
                    .zip(&inside)
                    .filter(|(_, &i)| !i)
                    .map(|(p, _)| p)
                    .sum();
                out.push(Exit {
                    state: s,
                    profile: a,
                    leave,
                });
            }
        }
    }
    let q = out.iter().map(|e| e.leave).reduce(f64::min);
    (out, q)
}

/// A profile differing from `a` in one player's action under which play
/// surely stays in `set`, with that player. Lexicographic in (player, action).
pub fn companion(
    game: &StochasticGame,
    set: &[usize],
    s: usize,
    a: usize,
) -> Option<(usize, usize)> {
    let inside = mask(game.states(), set);
    let own = game.profile_actions(a);
    for (i, &ai) in own.iter().enumerate() {
        for b in 0..game.action_count(i) {
            if b == ai {
                continue;
            }
            let alt = game.deviate(a, i, b);
            if game.stays_in(s, alt, &inside) {
                return Some((alt, i));
            }
        }
    }
    None
}

/// `u*_i(s, α) = Σ_t q(t | s, α) v¹_i(t)` for a joint distribution `α`.
pub fn continuation_value(
    game: &StochasticGame,
    v1: &[Vec<f64>],
    s: usize,
    joint: &[f64],
) -> Vec<f64> {
    let q = game.mix_transition(s, joint);
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

pub fn pure_continuation(game: &StochasticGame, v1: &[Vec<f64>], s: usize, a: usize) -> Vec<f64> {
    let mut joint = vec![0.0; game.profiles()];
    joint[a] = 1.0;
    continuation_value(game, v1, s, &joint)
}

/// How an exit is reached from its companion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ExitMove {
    /// The exit is the pure profile `profile`; the pure `companion` differs
    /// from it in the deviating player's action and keeps play in the set.
    Pure { profile: usize, companion: usize },
    /// The companion is a one-shot equilibrium under which play surely
    /// stays; the deviating player switches to `action` and the exit is the
    /// event that play leaves the set.
    Mixed {
        companion: Vec<Vec<f64>>,
        action: usize,
    },
}

/// Exit with a companion: the only exits an automaton can use, since a
/// single player mixes between the companion and the exit.
#[derive(Debug, Clone, Serialize)]
pub struct ExitCandidate {
    pub state: usize,
    pub player: usize,
    pub play: ExitMove,
    /// Probability of the exit event once the deviating action is played.
    pub leave: f64,
    /// Expected `v¹` right after the exit event.
    pub continuation: Vec<f64>,
}

impl ExitCandidate {
    /// Companion as one mixed action per player.
    pub fn companion_actions(&self, game: &StochasticGame) -> Vec<Vec<f64>> {
        match &self.play {
            ExitMove::Pure { companion, .. } => (0..game.players())
                .map(|i| {
                    let mut x = vec![0.0; game.action_count(i)];
                    x[game.action_of(*companion, i)] = 1.0;
                    x
                })
                .collect(),
            ExitMove::Mixed { companion, .. } => companion.clone(),
        }
    }

    /// Action the deviating player switches to.
    pub fn action(&self, game: &StochasticGame) -> usize {
        match &self.play {
            ExitMove::Pure { profile, .. } => game.action_of(*profile, self.player),
            ExitMove::Mixed { action, .. } => *action,
        }
    }

    /// Companion with the deviating player playing the exit action with
    /// probability `d`.
    pub fn perturbed(&self, game: &StochasticGame, d: f64) -> Vec<Vec<f64>> {
        let mut x = self.companion_actions(game);
        let i = self.player;
        x[i].iter_mut().for_each(|p| *p *= 1.0 - d);
        x[i][self.action(game)] += d;
        x
    }
}

pub fn admissible_exits(
    game: &StochasticGame,
    set: &[usize],
    v1: &[Vec<f64>],
) -> Vec<ExitCandidate> {
    exits(game, set)
        .0
        .into_iter()
        .filter_map(|e| {
            companion(game, set, e.state, e.profile).map(|(companion, player)| ExitCandidate {
                state: e.state,
                player,
                play: ExitMove::Pure {
                    profile: e.profile,
                    companion,
                },
                leave: 1.0,
                continuation: pure_continuation(game, v1, e.state, e.profile),
            })
        })
        .collect()
}

/// Exits by a single player from an equilibrium of the auxiliary game under
/// which play surely stays in `set`. `equilibria[s]` holds the equilibria
/// at state `s`.
pub fn mixed_exits(
    game: &StochasticGame,
    set: &[usize],
    v1: &[Vec<f64>],
    equilibria: &[EquilibriumSet],
) -> Vec<ExitCandidate> {
    let inside = mask(game.states(), set);
    let mut sorted = set.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::new();
    for &s in &sorted {
        for x in equilibria[s].profiles.iter().map(|e| &e.actions) {
            let joint = game.product(x);
            let stays = joint
                .iter()
                .enumerate()
                .all(|(a, &w)| w == 0.0 || game.stays_in(s, a, &inside));
            if !stays {
                continue;
            }
            for i in 0..game.players() {
                for b in 0..game.action_count(i) {
                    let mut y = x.clone();
                    y[i] = vec![0.0; game.action_count(i)];
                    y[i][b] = 1.0;
                    let q = game.mix_transition(s, &game.product(&y));
                    let leave: f64 = q
                        .iter()
                        .zip(&inside)
                        .filter(|(_, &c)| !c)
                        .map(|(p, _)| p)
                        .sum();
                    if leave < 1e-12 {
                        continue;
                    }
                    let continuation = (0..game.players())
                        .map(|j| {
                            q.iter()
                                .enumerate()
                                .filter(|&(t, _)| !inside[t])
                                .map(|(t, p)| p * v1[t][j])
                                .sum::<f64>()
                                / leave
                        })
                        .collect();
                    out.push(ExitCandidate {
                        state: s,
                        player: i,
                        play: ExitMove::Mixed {
                            companion: x.clone(),
                            action: b,
                        },
                        leave,
                        continuation,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct PlannedExit {
    pub exit: ExitCandidate,
    pub weight: f64,
    /// Per-visit probability of the exit event.
    pub eta: f64,
}

impl PlannedExit {
    /// Per-visit probability that the deviating action is played.
    pub fn deviation(&self) -> f64 {
        self.eta / self.exit.leave
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExitPlan {
    pub exits: Vec<PlannedExit>,
    pub target: Vec<f64>,
    /// Smallest coordinate of `Σ β u* − target`.
    pub slack: f64,
    /// Probability that some exit is played during one pass over the phases.
    pub scale: f64,
}

impl ExitPlan {
    pub fn expected_continuation(&self) -> Vec<f64> {
        let points: Vec<Vec<f64>> = self
            .exits
            .iter()
            .map(|e| e.exit.continuation.clone())
            .collect();
        let weights: Vec<f64> = self.exits.iter().map(|e| e.weight).collect();
        mix(&points, &weights)
    }
}

/// Outcome of the exit program when no plan reaches the target.
#[derive(Debug, Clone, Serialize)]
pub struct ExitCertificate {
    pub admissible: usize,
    /// Best achievable smallest slack, when there is any admissible exit.
    pub best_slack: Option<f64>,
}

/// Weights on admissible pure exits whose expected continuation value
/// dominates `target`, maximizing the smallest slack.
pub fn type_b_feasibility(
    game: &StochasticGame,
    set: &[usize],
    v1: &[Vec<f64>],
    target: &[f64],
    scale: f64,
) -> Result<ExitPlan, ExitCertificate> {
    plan_exits(admissible_exits(game, set, v1), target, scale)
}

/// Weights on `candidates` whose expected continuation value dominates
/// `target`, maximizing the smallest slack. The support is reduced to at
/// most `|I|` exits, and `scale` is lowered when needed so that every
/// deviation probability stays below one.
pub fn plan_exits(
    candidates: Vec<ExitCandidate>,
    target: &[f64],
    scale: f64,
) -> Result<ExitPlan, ExitCertificate> {
    let points: Vec<Vec<f64>> = candidates.iter().map(|e| e.continuation.clone()).collect();
    let Some((beta, slack)) = max_min_slack(&points, target) else {
        return Err(ExitCertificate {
            admissible: candidates.len(),
            best_slack: None,
        });
    };
    if slack < -1e-12 {
        return Err(ExitCertificate {
            admissible: candidates.len(),
            best_slack: Some(slack),
        });
    }
    let beta = reduce_upward(&points, &beta);
    let chosen: Vec<(usize, f64)> = beta
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(k, &w)| (k, w))
        .collect();
    let weights: Vec<f64> = chosen.iter().map(|&(_, w)| w).collect();
    let mut scale = scale;
    let eta = loop {
        let eta = solve_eta(&weights, scale).expect("weights are positive");
        let fits = chosen
            .iter()
            .zip(&eta)
            .all(|(&(k, _), &e)| e <= candidates[k].leave);
        if fits {
            break eta;
        }
        scale /= 2.0;
    };
    let exits: Vec<PlannedExit> = chosen
        .iter()
        .zip(&eta)
        .map(|(&(k, w), &eta)| PlannedExit {
            exit: candidates[k].clone(),
            weight: w,
            eta,
        })
        .collect();
    let achieved = mix(
        &exits
            .iter()
            .map(|e| e.exit.continuation.clone())
            .collect::<Vec<_>>(),
        &weights,
    );
    let slack = achieved
        .iter()
        .zip(target)
        .map(|(a, c)| a - c)
        .fold(f64::INFINITY, f64::min);
    Ok(ExitPlan {
        exits,
        target: target.to_vec(),
        slack,
        scale,
    })
}

/// Per-visit exit probabilities for the cyclic scheme so that the first
/// played exit is distributed as `beta`, with `scale` the probability that
/// some exit is played in one cycle.
///
/// The survival before phase `l` is `R_l = 1 − scale Σ_{m<l} β_m`, and
/// `η_l = scale β_l / R_l`.
pub fn solve_eta(beta: &[f64], scale: f64) -> Result<Vec<f64>, BuildError> {
    if beta.is_empty() || beta.iter().any(|&b| !(b > 0.0)) {
        return Err(BuildError::InvalidWeights(format!(
            "exit weights must be positive, got {beta:?}"
        )));
    }
    if !(scale > 0.0 && scale < 1.0) {
        return Err(BuildError::InvalidWeights(format!(
            "scale must lie in (0,1), got {scale}"
        )));
    }
    let total: f64 = beta.iter().sum();
    let mut before = 0.0;
    let mut eta = Vec::with_capacity(beta.len());
    for &b in beta {
        let b = b / total;
        eta.push((scale * b / (1.0 - scale * before)).min(1.0));
        before += b;
    }
    Ok(eta)
}

/// Distribution of the first played exit under the cyclic scheme.
pub fn first_exit_distribution(eta: &[f64]) -> Vec<f64> {
    let mut survive = 1.0;
    let mut raw = Vec::with_capacity(eta.len());
    for &e in eta {
        raw.push(survive * e);
        survive *= 1.0 - e;
    }
    let total = 1.0 - survive;
    raw.into_iter().map(|r| r / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorin() -> StochasticGame {
        StochasticGame::from_json(include_str!("../../games/sorin.json")).unwrap()
    }

    fn sorin_v1() -> Vec<Vec<f64>> {
        vec![vec![2.0 / 3.0, 0.5], vec![0.0, 1.0], vec![2.0, 0.0]]
    }

    #[test]
    fn sorin_exits() {
        let g = sorin();
        let (list, q) = exits(&g, &[0]);
        let keys: Vec<String> = list.iter().map(|e| g.profile_key(e.profile)).collect();
        assert_eq!(keys, vec!["B/L", "B/R"]);
        assert_eq!(q, Some(1.0));
        assert!(exits(&g, &[1]).0.is_empty());
    }

    #[test]
    fn sorin_companions() {
        let g = sorin();
        let bl = g.parse_profile_key("B/L").unwrap();
        let br = g.parse_profile_key("B/R").unwrap();
        let (c, i) = companion(&g, &[0], 0, bl).unwrap();
        assert_eq!((g.profile_key(c).as_str(), i), ("T/L", 0));
        let (c, i) = companion(&g, &[0], 0, br).unwrap();
        assert_eq!((g.profile_key(c).as_str(), i), ("T/R", 0));
    }

    #[test]
    fn sorin_exit_plan() {
        let g = sorin();
        let c = [2.0 / 3.0 - 0.05, 0.5 - 0.05];
        let plan = type_b_feasibility(&g, &[0], &sorin_v1(), &c, 0.1).unwrap();
        assert_eq!(plan.exits.len(), 2);
        assert!((plan.exits[0].weight - 11.0 / 18.0).abs() < 1e-9);
        assert!((plan.slack - (11.0 / 18.0 - 0.45)).abs() < 1e-9);
    }

    #[test]
    fn eta_round_trip() {
        let beta = [0.2, 0.5, 0.3];
        let eta = solve_eta(&beta, 0.1).unwrap();
        let back = first_exit_distribution(&eta);
        for (a, b) in beta.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(solve_eta(&[1.0], 0.1).unwrap(), vec![0.1]);
        assert!(solve_eta(&[0.0, 1.0], 0.1).is_err());
    }
}
