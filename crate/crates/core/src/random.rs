//! Seeded random games for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::StochasticGame;

/// Shape of generated games. Payoffs are multiples of 1/8 in [-1,1] and
/// transition probabilities multiples of 1/4, so every sum is exact.
#[derive(Debug, Clone)]
pub struct GameShape {
    pub states: usize,
    pub actions: Vec<usize>,
    /// Chance that a state is absorbing.
    pub absorbing: f64,
}

fn payoff(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-8i32..=8) as f64 / 8.0
}

/// A game with the given shape, reproducible from `seed`.
pub fn random_game(shape: &GameShape, seed: u64) -> StochasticGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.states;
    let players = shape.actions.len();
    let absorbing: Vec<bool> = (0..n).map(|_| rng.random_bool(shape.absorbing)).collect();
    let fixed: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..players).map(|_| payoff(&mut rng)).collect())
        .collect();
    StochasticGame::from_fn(n, &shape.actions, |s, _| {
        let mut q = vec![0.0; n];
        if absorbing[s] {
            q[s] = 1.0;
            return (fixed[s].clone(), q);
        }
        let u = (0..players).map(|_| payoff(&mut rng)).collect();
        let t1 = rng.random_range(0..n);
        if rng.random_bool(0.5) {
            q[t1] = 1.0;
        } else {
            let t2 = rng.random_range(0..n);
            let w = [0.25, 0.5, 0.75][rng.random_range(0..3)];
            q[t1] += w;
            q[t2] += 1.0 - w;
        }
        (u, q)
    })
    .expect("generated games are well formed")
}

/// A two-player absorbing game shaped like Sorin's example: in the one
/// non-absorbing state the top row keeps play there, and each profile of the
/// bottom row moves to its own absorbing state. Staying payoffs lie on the
/// segment from (−1/2, 0) to (1/2, −1); absorbing payoffs are arbitrary.
pub fn quitting_game(seed: u64) -> StochasticGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let absorbing: Vec<Vec<f64>> = (0..2)
        .map(|_| vec![payoff(&mut rng), payoff(&mut rng)])
        .collect();
    let stay: Vec<Vec<f64>> = (0..2)
        .map(|_| {
            let x = rng.random_range(0..=8) as f64 / 8.0;
            vec![x - 0.5, -x]
        })
        .collect();
    StochasticGame::from_fn(3, &[2, 2], |s, a| {
        let mut q = vec![0.0; 3];
        match (s, a[0]) {
            (0, 0) => {
                q[0] = 1.0;
                (stay[a[1]].clone(), q)
            }
            (0, _) => {
                q[1 + a[1]] = 1.0;
                (absorbing[a[1]].clone(), q)
            }
            _ => {
                q[s] = 1.0;
                (absorbing[s - 1].clone(), q)
            }
        }
    })
    .expect("generated games are well formed")
}

/// The suite of two-player games with at most five states and two actions
/// per player used for end-to-end checks. Every second game is a quitting
/// game, the rest are drawn by [`random_game`].
pub fn two_player_suite(count: usize, seed: u64) -> Vec<StochasticGame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            if k % 2 == 1 {
                return quitting_game(rng.random());
            }
            let shape = GameShape {
                states: rng.random_range(1..=5),
                actions: vec![rng.random_range(1..=2), rng.random_range(1..=2)],
                absorbing: 0.3,
            };
            random_game(&shape, rng.random())
        })
        .collect()
}

/// Single-player games: Markov decision processes.
pub fn mdp_suite(count: usize, seed: u64) -> Vec<StochasticGame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let shape = GameShape {
                states: rng.random_range(1..=5),
                actions: vec![rng.random_range(1..=3)],
                absorbing: 0.2,
            };
            random_game(&shape, rng.random())
        })
        .collect()
}
