//! Strategy automata: finite machines reading the played profile and the
//! next state, and emitting mixed or correlated actions.
//!
//! Stochastic transitions are resolved by a public coin shared by all
//! players, so the per-player machines stay synchronized: each reads the
//! same coin and moves to the same successor.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::game::{StationaryCorrelated, StationaryProfile, StochasticGame};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Output {
    /// Independent mixed action per player.
    Product(Vec<Vec<f64>>),
    /// Distribution over joint profiles.
    Correlated(Vec<f64>),
}

impl Output {
    pub fn joint(&self, game: &StochasticGame) -> Vec<f64> {
        match self {
            Output::Product(x) => game.product(x),
            Output::Correlated(w) => w.clone(),
        }
    }

    pub fn pure(game: &StochasticGame, a: usize) -> Output {
        Output::Product(
            game.profile_actions(a)
                .into_iter()
                .enumerate()
                .map(|(i, b)| {
                    let mut x = vec![0.0; game.action_count(i)];
                    x[b] = 1.0;
                    x
                })
                .collect(),
        )
    }

    /// Marginal of one player.
    pub fn marginal(&self, game: &StochasticGame, player: usize) -> Vec<f64> {
        match self {
            Output::Product(x) => x[player].clone(),
            Output::Correlated(w) => game.marginal(w, player),
        }
    }
}

/// One machine state. `next[a][t]` lists successors with probabilities, in
/// the order used to read the public coin.
#[derive(Debug, Clone, Serialize)]
pub struct Node {
    /// Game state this machine state is used at along play.
    pub state: usize,
    pub label: String,
    pub output: Output,
    pub next: Vec<Vec<Vec<(usize, f64)>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct JointAutomaton {
    pub nodes: Vec<Node>,
    /// Machine state to start in, per initial game state.
    pub initial: Vec<usize>,
    /// Every output is a product of independent mixed actions.
    pub product_form: bool,
}

impl JointAutomaton {
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    /// Successor of `node` after profile `a` and next state `t`, reading the
    /// public coin `u ∈ [0,1)` by inverse CDF over the listed successors.
    pub fn step(&self, node: usize, a: usize, t: usize, u: f64) -> usize {
        let succ = &self.nodes[node].next[a][t];
        let mut acc = 0.0;
        for &(q, p) in succ {
            acc += p;
            if u < acc {
                return q;
            }
        }
        succ.last().expect("successor list is nonempty").0
    }

    /// Whether the transition from `node` on `(a, t)` needs the coin.
    pub fn is_random(&self, node: usize, a: usize, t: usize) -> bool {
        self.nodes[node].next[a][t].len() > 1
    }

    /// A stationary correlated profile as a machine with one state per game state.
    pub fn stationary(game: &StochasticGame, profile: &StationaryCorrelated) -> Self {
        let outputs = profile
            .actions
            .iter()
            .map(|w| Output::Correlated(w.clone()))
            .collect();
        Self::one_per_state(game, outputs, false)
    }

    pub fn stationary_product(game: &StochasticGame, profile: &StationaryProfile) -> Self {
        let outputs = profile
            .actions
            .iter()
            .map(|x| Output::Product(x.clone()))
            .collect();
        Self::one_per_state(game, outputs, true)
    }

    fn one_per_state(game: &StochasticGame, outputs: Vec<Output>, product_form: bool) -> Self {
        let n = game.states();
        let nodes = outputs
            .into_iter()
            .enumerate()
            .map(|(s, output)| Node {
                state: s,
                label: format!("stationary {}", game.state_name(s)),
                output,
                next: vec![(0..n).map(|t| vec![(t, 1.0)]).collect(); game.profiles()],
            })
            .collect();
        JointAutomaton {
            nodes,
            initial: (0..n).collect(),
            product_form,
        }
    }

    /// The view of one player: same machine states and transitions, with
    /// the player's own marginal as output.
    pub fn player_view(&self, game: &StochasticGame, player: usize) -> Option<PlayerAutomaton> {
        if !self.product_form {
            return None;
        }
        Some(PlayerAutomaton {
            player,
            outputs: self
                .nodes
                .iter()
                .map(|n| n.output.marginal(game, player))
                .collect(),
            next: self.nodes.iter().map(|n| n.next.clone()).collect(),
            initial: self.initial.clone(),
        })
    }

    /// If every output depends only on the game state, the equivalent
    /// stationary correlated profile.
    pub fn as_stationary(&self, game: &StochasticGame) -> Option<StationaryCorrelated> {
        let mut per_state: Vec<Option<Vec<f64>>> = vec![None; game.states()];
        for node in &self.nodes {
            let w = node.output.joint(game);
            match &per_state[node.state] {
                None => per_state[node.state] = Some(w),
                Some(prev) => {
                    if prev.iter().zip(&w).any(|(a, b)| (a - b).abs() > 1e-15) {
                        return None;
                    }
                }
            }
        }
        let actions = per_state
            .into_iter()
            .enumerate()
            .map(|(s, w)| w.unwrap_or_else(|| self.nodes[self.initial[s]].output.joint(game)))
            .collect();
        Some(StationaryCorrelated { actions })
    }

    /// Markov chain on the reachable (game state, machine state) pairs from
    /// every initial state, with per-player expected stage payoffs.
    pub fn product_chain(&self, game: &StochasticGame) -> ProductChain {
        let n = game.states();
        let q = self.size();
        let mut index = vec![usize::MAX; n * q];
        let mut pairs = Vec::new();
        let mut queue = Vec::new();
        for s in 0..n {
            let key = s * q + self.initial[s];
            if index[key] == usize::MAX {
                index[key] = pairs.len();
                pairs.push((s, self.initial[s]));
                queue.push(key);
            }
        }
        let mut edges: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut head = 0;
        while head < pairs.len() {
            let (s, node) = pairs[head];
            head += 1;
            let joint = self.nodes[node].output.joint(game);
            let mut row: Vec<(usize, f64)> = Vec::new();
            for (a, &w) in joint.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (t, &p) in game.transition(s, a).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for &(next, r) in &self.nodes[node].next[a][t] {
                        if r == 0.0 {
                            continue;
                        }
                        let key = t * q + next;
                        if index[key] == usize::MAX {
                            index[key] = pairs.len();
                            pairs.push((t, next));
                        }
                        row.push((index[key], w * p * r));
                    }
                }
            }
            edges.push(row);
        }
        let m = pairs.len();
        let mut p = DMatrix::zeros(m, m);
        for (k, row) in edges.iter().enumerate() {
            for &(j, w) in row {
                p[(k, j)] += w;
            }
        }
        let mut r = DMatrix::zeros(m, game.players());
        for (k, &(s, node)) in pairs.iter().enumerate() {
            let u = game.mix_payoff(s, &self.nodes[node].output.joint(game));
            for i in 0..game.players() {
                r[(k, i)] = u[i];
            }
        }
        let start = (0..n).map(|s| index[s * q + self.initial[s]]).collect();
        ProductChain { pairs, p, r, start }
    }
}

/// The reachable product chain of a game and a joint automaton.
#[derive(Debug, Clone)]
pub struct ProductChain {
    /// `(game state, machine state)` of each chain state.
    pub pairs: Vec<(usize, usize)>,
    pub p: DMatrix<f64>,
    /// Expected stage payoff per player.
    pub r: DMatrix<f64>,
    /// Chain state of each initial game state.
    pub start: Vec<usize>,
}

/// One player's machine: outputs only that player's mixed action.
#[derive(Debug, Clone, Serialize)]
pub struct PlayerAutomaton {
    pub player: usize,
    pub outputs: Vec<Vec<f64>>,
    pub next: Vec<Vec<Vec<Vec<(usize, f64)>>>>,
    pub initial: Vec<usize>,
}

impl PlayerAutomaton {
    pub fn size(&self) -> usize {
        self.outputs.len()
    }

    pub fn step(&self, node: usize, a: usize, t: usize, u: f64) -> usize {
        let succ = &self.next[node][a][t];
        let mut acc = 0.0;
        for &(q, p) in succ {
            acc += p;
            if u < acc {
                return q;
            }
        }
        succ.last().expect("successor list is nonempty").0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_product_collapses() {
        let g = StochasticGame::from_fn(2, &[2], |s, a| {
            let mut q = vec![0.0; 2];
            q[(s + a[0]) % 2] = 1.0;
            (vec![a[0] as f64], q)
        })
        .unwrap();
        let x = StationaryCorrelated::pure(&g, &[1, 0]);
        let m = JointAutomaton::stationary(&g, &x);
        let chain = m.product_chain(&g);
        assert_eq!(chain.pairs.len(), 2);
        assert_eq!(m.as_stationary(&g).unwrap(), x);
    }

    #[test]
    fn coin_reads_inverse_cdf() {
        let g = StochasticGame::from_fn(1, &[1], |_, _| (vec![0.0], vec![1.0])).unwrap();
        let mut m = JointAutomaton::stationary(&g, &StationaryCorrelated::pure(&g, &[0]));
        m.nodes.push(m.nodes[0].clone());
        m.nodes[0].next[0][0] = vec![(0, 0.25), (1, 0.75)];
        assert_eq!(m.step(0, 0, 0, 0.1), 0);
        assert_eq!(m.step(0, 0, 0, 0.3), 1);
        assert!(m.is_random(0, 0, 0));
    }
}
