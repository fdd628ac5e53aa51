//! Monte Carlo play of automaton profiles, as a cross-check of the exact
//! linear solves.
//!
//! Every replication owns independent streams derived from the seed: one
//! for nature, one public coin read by the automata, one for correlated
//! draws and one per player.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::automaton::{JointAutomaton, Output, PlayerAutomaton};
use crate::game::StochasticGame;

/// Remaining discount weight at which play is cut off.
pub const CUTOFF: f64 = 1e-9;

/// Number of stages after which `λ^horizon < CUTOFF`.
pub fn default_horizon(lambda: f64) -> usize {
    if lambda <= 0.0 {
        return 1;
    }
    (CUTOFF.ln() / lambda.ln()).ceil() as usize + 1
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Streams {
    nature: ChaCha8Rng,
    coin: ChaCha8Rng,
    correlation: ChaCha8Rng,
    players: Vec<ChaCha8Rng>,
}

impl Streams {
    fn new(seed: u64, replication: u64, players: usize) -> Self {
        let base = splitmix(seed ^ splitmix(replication));
        let stream = |k: u64| ChaCha8Rng::seed_from_u64(splitmix(base.wrapping_add(k)));
        Streams {
            nature: stream(0),
            coin: stream(1),
            correlation: stream(2),
            players: (0..players as u64).map(|i| stream(3 + i)).collect(),
        }
    }
}

fn sample(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

/// One realized stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step {
    pub state: usize,
    pub profile: usize,
    pub node: usize,
}

/// Plays `stages` stages of the joint automaton.
pub fn play_joint(
    game: &StochasticGame,
    automaton: &JointAutomaton,
    s1: usize,
    stages: usize,
    seed: u64,
    replication: u64,
) -> Vec<Step> {
    let mut streams = Streams::new(seed, replication, game.players());
    let mut s = s1;
    let mut node = automaton.initial[s1];
    let mut path = Vec::with_capacity(stages);
    for _ in 0..stages {
        let a = match &automaton.nodes[node].output {
            Output::Product(x) => {
                let actions: Vec<usize> = x
                    .iter()
                    .zip(streams.players.iter_mut())
                    .map(|(xi, rng)| sample(xi, rng.random::<f64>()))
                    .collect();
                game.profile_index(&actions)
            }
            Output::Correlated(w) => sample(w, streams.correlation.random::<f64>()),
        };
        let t = sample(game.transition(s, a), streams.nature.random::<f64>());
        let u = streams.coin.random::<f64>();
        path.push(Step {
            state: s,
            profile: a,
            node,
        });
        node = automaton.step(node, a, t, u);
        s = t;
    }
    path
}

/// Plays `stages` stages with each player running their own machine and
/// all of them reading the same public coin.
pub fn play_players(
    game: &StochasticGame,
    views: &[PlayerAutomaton],
    s1: usize,
    stages: usize,
    seed: u64,
    replication: u64,
) -> Vec<Step> {
    let mut streams = Streams::new(seed, replication, game.players());
    let mut s = s1;
    let mut nodes: Vec<usize> = views.iter().map(|v| v.initial[s1]).collect();
    let mut path = Vec::with_capacity(stages);
    for _ in 0..stages {
        let actions: Vec<usize> = views
            .iter()
            .zip(&nodes)
            .zip(streams.players.iter_mut())
            .map(|((v, &q), rng)| sample(&v.outputs[q], rng.random::<f64>()))
            .collect();
        let a = game.profile_index(&actions);
        let t = sample(game.transition(s, a), streams.nature.random::<f64>());
        let u = streams.coin.random::<f64>();
        path.push(Step {
            state: s,
            profile: a,
            node: nodes[0],
        });
        for (q, v) in nodes.iter_mut().zip(views) {
            *q = v.step(*q, a, t, u);
        }
        s = t;
    }
    path
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationResult {
    pub lambda: f64,
    pub horizon: usize,
    pub replications: usize,
    pub seed: u64,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Mean discounted weight spent in each game state.
    pub occupation: Vec<f64>,
}

/// Sample mean of the λ-discounted payoff from `s1` over `replications`
/// independent plays of `horizon` stages.
pub fn simulate(
    game: &StochasticGame,
    automaton: &JointAutomaton,
    s1: usize,
    lambda: f64,
    horizon: usize,
    replications: usize,
    seed: u64,
) -> SimulationResult {
    let players = game.players();
    let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let path = play_joint(game, automaton, s1, horizon, seed, r);
            let mut total = vec![0.0; players];
            let mut occupation = vec![0.0; game.states()];
            let mut weight = 1.0 - lambda;
            for step in &path {
                for (t, u) in total.iter_mut().zip(game.payoff(step.state, step.profile)) {
                    *t += weight * u;
                }
                occupation[step.state] += weight;
                weight *= lambda;
            }
            (total, occupation)
        })
        .collect();
    let n = replications.max(1) as f64;
    let mut mean = vec![0.0; players];
    let mut occupation = vec![0.0; game.states()];
    for (x, occ) in &samples {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
        for (o, v) in occupation.iter_mut().zip(occ) {
            *o += v / n;
        }
    }
    let std_err = (0..players)
        .map(|i| {
            if replications < 2 {
                return 0.0;
            }
            let var = samples
                .iter()
                .map(|(x, _)| (x[i] - mean[i]).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            (var / n).sqrt()
        })
        .collect();
    SimulationResult {
        lambda,
        horizon,
        replications,
        seed,
        mean,
        std_err,
        occupation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::StationaryCorrelated;

    #[test]
    fn deterministic_game_has_no_variance() {
        let g = StochasticGame::from_fn(1, &[1], |_, _| (vec![0.25], vec![1.0])).unwrap();
        let m = JointAutomaton::stationary(&g, &StationaryCorrelated::pure(&g, &[0]));
        let r = simulate(&g, &m, 0, 0.9, default_horizon(0.9), 50, 7);
        assert!((r.mean[0] - 0.25).abs() < 1e-9);
        assert!(r.std_err[0] < 1e-12);
    }

    #[test]
    fn same_seed_same_result() {
        let g = StochasticGame::from_json(include_str!("../games/sorin.json")).unwrap();
        let w = vec![0.25; 4];
        let x = StationaryCorrelated::new(&g, vec![w.clone(), w.clone(), w]).unwrap();
        let m = JointAutomaton::stationary(&g, &x);
        let a = simulate(&g, &m, 0, 0.9, 100, 200, 3);
        let b = simulate(&g, &m, 0, 0.9, 100, 200, 3);
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.std_err, b.std_err);
    }

    #[test]
    fn horizon_cuts_off_the_tail() {
        let h = default_horizon(0.99);
        assert!(0.99f64.powi(h as i32) < CUTOFF);
    }
}
