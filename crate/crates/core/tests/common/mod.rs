//! Brute-force reference computations shared by the integration tests.
//! Nothing here calls into the library's chain, structure or frequency code.

#![allow(dead_code)]

use acceptable::StochasticGame;

pub type Matrix = Vec<Vec<f64>>;

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let m = b[0].len();
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for k in 0..b.len() {
            if a[i][k] == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// Cesàro limit of a stochastic matrix: the lazy chain `(I + P)/2` is
/// aperiodic with the same limit, and 2^64 steps of it by repeated
/// squaring are far past mixing for the small chains used here.
pub fn cesaro(p: &Matrix) -> Matrix {
    let n = p.len();
    let mut l: Matrix = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| 0.5 * p[i][j] + if i == j { 0.5 } else { 0.0 })
                .collect()
        })
        .collect();
    for _ in 0..64 {
        l = matmul(&l, &l);
        // Rounding in the row sums would otherwise compound over 2^64 steps.
        for row in l.iter_mut() {
            let mass: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= mass);
        }
    }
    l
}

/// Reflexive-transitive closure of the support graph.
pub fn reach(p: &Matrix) -> Vec<Vec<bool>> {
    let n = p.len();
    let mut r: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| i == j || p[i][j] > 0.0).collect())
        .collect();
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

/// Recurrent classes: a state is recurrent when everything it reaches
/// reaches it back. Classes sorted, each sorted.
pub fn recurrent_classes(p: &Matrix) -> Vec<Vec<usize>> {
    let n = p.len();
    let r = reach(p);
    let recurrent: Vec<bool> = (0..n)
        .map(|s| (0..n).all(|t| !r[s][t] || r[t][s]))
        .collect();
    let mut seen = vec![false; n];
    let mut classes = Vec::new();
    for s in 0..n {
        if !recurrent[s] || seen[s] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&t| r[s][t] && r[t][s]).collect();
        for &t in &class {
            seen[t] = true;
        }
        classes.push(class);
    }
    classes.sort();
    classes
}

/// Transition matrix of a stationary correlated profile `w[s][a]`.
pub fn chain_of(game: &StochasticGame, w: &[Vec<f64>]) -> Matrix {
    let n = game.states();
    let mut p = vec![vec![0.0; n]; n];
    for s in 0..n {
        for (a, &x) in w[s].iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (t, &q) in game.transition(s, a).iter().enumerate() {
                p[s][t] += x * q;
            }
        }
    }
    p
}

/// Expected stage payoff of `player` per state.
pub fn reward_of(game: &StochasticGame, w: &[Vec<f64>], player: usize) -> Vec<f64> {
    (0..game.states())
        .map(|s| {
            w[s].iter()
                .enumerate()
                .map(|(a, &x)| x * game.payoff(s, a)[player])
                .sum()
        })
        .collect()
}

/// Long-run average payoff of `player` from every state.
pub fn average_payoff(game: &StochasticGame, w: &[Vec<f64>], player: usize) -> Vec<f64> {
    let star = cesaro(&chain_of(game, w));
    let r = reward_of(game, w, player);
    star.iter()
        .map(|row| row.iter().zip(&r).map(|(p, x)| p * x).sum())
        .collect()
}

pub fn pure_profile(game: &StochasticGame, choice: &[usize]) -> Vec<Vec<f64>> {
    choice
        .iter()
        .map(|&a| {
            let mut w = vec![0.0; game.profiles()];
            w[a] = 1.0;
            w
        })
        .collect()
}

/// Every assignment of one option per slot.
pub fn assignments(options: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for opts in options {
        let mut next = Vec::new();
        for prefix in &out {
            for &o in opts {
                let mut v = prefix.clone();
                v.push(o);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Optimal long-run average value of a one-player game, by enumerating
/// every pure stationary policy.
pub fn mdp_value(game: &StochasticGame) -> (Vec<f64>, Vec<Vec<usize>>) {
    let n = game.states();
    let options: Vec<Vec<usize>> = (0..n).map(|_| (0..game.profiles()).collect()).collect();
    let mut best = vec![f64::NEG_INFINITY; n];
    let policies = assignments(&options);
    let values: Vec<Vec<f64>> = policies
        .iter()
        .map(|c| average_payoff(game, &pure_profile(game, c), 0))
        .collect();
    for v in &values {
        for s in 0..n {
            best[s] = best[s].max(v[s]);
        }
    }
    let optimal = policies
        .into_iter()
        .zip(&values)
        .filter(|(_, v)| v.iter().zip(&best).all(|(x, b)| (x - b).abs() < 1e-9))
        .map(|(c, _)| c)
        .collect();
    (best, optimal)
}

fn stays(game: &StochasticGame, s: usize, a: usize, inside: &[bool]) -> bool {
    game.transition(s, a)
        .iter()
        .enumerate()
        .all(|(t, &q)| q == 0.0 || inside[t])
}

/// Whether some pure stationary profile that never leaves `set` reaches
/// `target` with probability one from every state of `set`.
pub fn joint_reach_all(game: &StochasticGame, set: &[usize], target: usize) -> bool {
    let n = game.states();
    let mut inside = vec![false; n];
    for &s in set {
        inside[s] = true;
    }
    let options: Vec<Vec<usize>> = set
        .iter()
        .map(|&s| {
            (0..game.profiles())
                .filter(|&a| stays(game, s, a, &inside))
                .collect()
        })
        .collect();
    if options.iter().any(Vec::is_empty) {
        return false;
    }
    assignments(&options).iter().any(|choice| {
        let mut p = vec![vec![0.0; n]; n];
        for (k, &s) in set.iter().enumerate() {
            if s == target {
                p[s][s] = 1.0;
                continue;
            }
            for (t, &q) in game.transition(s, choice[k]).iter().enumerate() {
                p[s][t] += q;
            }
        }
        let r = reach(&p);
        // With the target absorbing, it is reached with probability one
        // from s when every state reachable from s can still reach it.
        set.iter()
            .all(|&s| set.iter().all(|&u| !r[s][u] || r[u][target]))
    })
}

/// Maximal communicating sets by scanning every subset: closed under the
/// given successor lists, values within `tol_v`, and every state reachable
/// with probability one from every other without leaving.
pub fn maximal_communicating(
    game: &StochasticGame,
    successors: &[Vec<usize>],
    v1: &[Vec<f64>],
    tol_v: f64,
) -> Vec<Vec<usize>> {
    let n = game.states();
    let mut good: Vec<u32> = Vec::new();
    for bits in 1u32..(1 << n) {
        let set: Vec<usize> = (0..n).filter(|&s| bits & (1 << s) != 0).collect();
        let closed = set
            .iter()
            .all(|&s| successors[s].iter().all(|&t| bits & (1 << t) != 0));
        if !closed {
            continue;
        }
        let flat = (0..game.players()).all(|i| {
            let vals: Vec<f64> = set.iter().map(|&s| v1[s][i]).collect();
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo <= tol_v
        });
        if flat && set.iter().all(|&t| joint_reach_all(game, &set, t)) {
            good.push(bits);
        }
    }
    let mut maximal: Vec<Vec<usize>> = good
        .iter()
        .filter(|&&b| !good.iter().any(|&c| c != b && c & b == b))
        .map(|&b| (0..n).filter(|&s| b & (1 << s) != 0).collect())
        .collect();
    maximal.sort();
    maximal
}

/// Frequency vectors `[s][a]` of every pure stationary profile on `set`
/// restricted to its recurrent classes that stay inside `set`.
pub fn recurrent_frequencies(game: &StochasticGame, set: &[usize]) -> Vec<Matrix> {
    let n = game.states();
    let k = set.len();
    let options: Vec<Vec<usize>> = set.iter().map(|_| (0..game.profiles()).collect()).collect();
    let mut out: Vec<Matrix> = Vec::new();
    for choice in assignments(&options) {
        // Chain on the set plus a sink for everything outside it.
        let mut p = vec![vec![0.0; k + 1]; k + 1];
        p[k][k] = 1.0;
        for (r, &s) in set.iter().enumerate() {
            for (t, &q) in game.transition(s, choice[r]).iter().enumerate() {
                let c = set.iter().position(|&u| u == t).unwrap_or(k);
                p[r][c] += q;
            }
        }
        let star = cesaro(&p);
        for class in recurrent_classes(&p) {
            if class.contains(&k) {
                continue;
            }
            let row = &star[class[0]];
            let mut rho = vec![vec![0.0; game.profiles()]; n];
            for &c in &class {
                rho[set[c]][choice[c]] = row[c];
            }
            if !out.iter().any(|q| distance(q, &rho) < 1e-9) {
                out.push(rho);
            }
        }
    }
    out
}

pub fn distance(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Distribution of the first exit when phase `l` of a repeating cycle
/// exits with probability `eta[l]`.
pub fn cyclic_first_exit(eta: &[f64]) -> Vec<f64> {
    // P(first exit at l) = Σ_cycles (Π(1-η))^c · Π_{m<l}(1-η_m) · η_l.
    let cycle: f64 = eta.iter().map(|e| 1.0 - e).product();
    let mut prefix = 1.0;
    eta.iter()
        .map(|&e| {
            let p = prefix * e / (1.0 - cycle);
            prefix *= 1.0 - e;
            p
        })
        .collect()
}
