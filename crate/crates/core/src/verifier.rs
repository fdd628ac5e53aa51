//! Exact checks of acceptability, individual rationality, the value
//! submartingale and automaton sizes, all on the product chain of the game
//! and the automaton.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::automaton::{JointAutomaton, ProductChain};
use crate::builder::{BlockKind, BlockLayout};
use crate::chain::{stopped_values, CesaroLimit};
use crate::error::GameError;
use crate::game::{check_discount, discounted_solve, rows, StochasticGame};
use crate::structure::mask;

/// Default discount grid.
pub const DEFAULT_GRID: [f64; 5] = [0.9, 0.99, 0.999, 0.9999, 0.99999];
/// Margins above `−MARGIN_TOL` count as nonnegative.
pub const MARGIN_TOL: f64 = 1e-9;
/// Extra room in the individual-rationality inequality.
pub const IR_TOL: f64 = 1e-6;
/// Smallest allowed drift of the value process.
pub const DRIFT_TOL: f64 = 1e-6;

fn discounted_all(chain: &ProductChain, lambda: f64) -> Result<DMatrix<f64>, GameError> {
    check_discount(lambda)?;
    discounted_solve(&chain.p, &chain.r, lambda)
        .ok_or_else(|| GameError::Invalid("singular discounted system".into()))
}

/// λ-discounted payoff of a joint automaton from `s1`.
pub fn exact_discounted_payoff_automaton(
    game: &StochasticGame,
    automaton: &JointAutomaton,
    s1: usize,
    lambda: f64,
) -> Result<Vec<f64>, GameError> {
    let chain = automaton.product_chain(game);
    let gamma = discounted_all(&chain, lambda)?;
    Ok(gamma.row(chain.start[s1]).iter().copied().collect())
}

/// Limit of the discounted (equivalently, average) payoffs from every
/// product state: `out[x][i]`.
pub fn limit_payoffs(chain: &ProductChain) -> Vec<Vec<f64>> {
    CesaroLimit::new(&chain.p).average_reward(&chain.r)
}

#[derive(Debug, Clone, Serialize)]
pub struct AcceptabilityEntry {
    pub state: usize,
    pub player: usize,
    pub threshold: f64,
    /// Payoff at each grid point.
    pub payoffs: Vec<f64>,
    pub margins: Vec<f64>,
    pub limit: f64,
    pub limit_margin: f64,
    /// Smallest grid point from which every margin, and the limit margin,
    /// is nonnegative.
    pub lambda0: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AcceptabilityReport {
    pub grid: Vec<f64>,
    pub entries: Vec<AcceptabilityEntry>,
    pub worst_margin: f64,
    pub pass: bool,
}

impl AcceptabilityReport {
    pub fn failures(&self) -> impl Iterator<Item = &AcceptabilityEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }

    pub fn entry(&self, state: usize, player: usize) -> Option<&AcceptabilityEntry> {
        self.entries
            .iter()
            .find(|e| e.state == state && e.player == player)
    }
}

fn acceptability(
    chain: &ProductChain,
    starts: &[(usize, usize)],
    w: &[Vec<f64>],
    grid: &[f64],
) -> Result<AcceptabilityReport, GameError> {
    let gammas: Vec<DMatrix<f64>> = grid
        .par_iter()
        .map(|&l| discounted_all(chain, l))
        .collect::<Result<_, _>>()?;
    let limit = limit_payoffs(chain);
    let players = chain.r.ncols();
    let mut entries = Vec::new();
    for &(state, x) in starts {
        for i in 0..players {
            let threshold = w[state][i];
            let payoffs: Vec<f64> = gammas.iter().map(|g| g[(x, i)]).collect();
            let margins: Vec<f64> = payoffs.iter().map(|p| p - threshold).collect();
            let limit_margin = limit[x][i] - threshold;
            let mut lambda0 = None;
            if limit_margin >= -MARGIN_TOL {
                for k in (0..grid.len()).rev() {
                    if margins[k] >= -MARGIN_TOL {
                        lambda0 = Some(grid[k]);
                    } else {
                        break;
                    }
                }
            }
            entries.push(AcceptabilityEntry {
                state,
                player: i,
                threshold,
                payoffs,
                margins,
                limit: limit[x][i],
                limit_margin,
                pass: lambda0.is_some(),
                lambda0,
            });
        }
    }
    let worst_margin = entries
        .iter()
        .map(|e| {
            // The margin that decides the verdict: the limit, or the finest grid point.
            e.limit_margin
                .min(*e.margins.last().unwrap_or(&e.limit_margin))
        })
        .fold(f64::INFINITY, f64::min);
    let pass = entries.iter().all(|e| e.pass);
    Ok(AcceptabilityReport {
        grid: grid.to_vec(),
        entries,
        worst_margin,
        pass,
    })
}

/// `w`-acceptability at every initial state: for some grid point `λ0`, all
/// finer grid points and the limit give every player at least `w_i(s)`.
pub fn check_w_acceptable(
    game: &StochasticGame,
    automaton: &JointAutomaton,
    w: &[Vec<f64>],
    grid: &[f64],
) -> Result<AcceptabilityReport, GameError> {
    let chain = automaton.product_chain(game);
    let starts: Vec<(usize, usize)> = (0..game.states()).map(|s| (s, chain.start[s])).collect();
    acceptability(&chain, &starts, w, grid)
}

pub fn shifted(v1: &[Vec<f64>], epsilon: f64) -> Vec<Vec<f64>> {
    v1.iter()
        .map(|row| row.iter().map(|v| v - epsilon).collect())
        .collect()
}

/// Acceptability with `w = v¹ − ε`.
pub fn check_minmax_acceptable(
    game: &StochasticGame,
    automaton: &JointAutomaton,
    v1: &[Vec<f64>],
    epsilon: f64,
    grid: &[f64],
) -> Result<AcceptabilityReport, GameError> {
    check_w_acceptable(game, automaton, &shifted(v1, epsilon), grid)
}

/// Acceptability from every reachable product state, each measured
/// against `v¹ − ε` at its own game state.
pub fn check_subgame_perfect(
    game: &StochasticGame,
    automaton: &JointAutomaton,
    v1: &[Vec<f64>],
    epsilon: f64,
    grid: &[f64],
) -> Result<AcceptabilityReport, GameError> {
    let chain = automaton.product_chain(game);
    let starts: Vec<(usize, usize)> = chain
        .pairs
        .iter()
        .enumerate()
        .map(|(x, &(s, _))| (s, x))
        .collect();
    acceptability(&chain, &starts, &shifted(v1, epsilon), grid)
}

#[derive(Debug, Clone, Serialize)]
pub struct AverageEntry {
    pub state: usize,
    pub player: usize,
    pub threshold: f64,
    /// Average of the first `k` expected stage payoffs, `k = 2^0 … 2^20`.
    pub averages: Vec<f64>,
    pub limit: f64,
    pub average_pass: bool,
    pub limit_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AverageReport {
    pub horizons: Vec<u64>,
    pub entries: Vec<AverageEntry>,
    pub average_pass: bool,
    pub limit_pass: bool,
}

/// Largest horizon exponent of the stage averages.
pub const AVERAGE_DOUBLINGS: u32 = 20;

/// Average and limit acceptability.
///
/// Stage averages come from repeated squaring of the product chain. The
/// averages converge to the limit, so the average check asks that the
/// longest listed horizon and the limit both clear the threshold.
pub fn check_average_limit_acceptable(
    game: &StochasticGame,
    automaton: &JointAutomaton,
    w: &[Vec<f64>],
) -> AverageReport {
    let chain = automaton.product_chain(game);
    // sum = Σ_{n<k} P^n r and power = P^k for k = 2^j
    let mut sum = chain.r.clone();
    let mut power = chain.p.clone();
    let mut horizons = vec![1u64];
    let mut averages = vec![chain.r.clone()];
    for j in 1..=AVERAGE_DOUBLINGS {
        sum = &sum + &power * &sum;
        power = &power * &power;
        let k = 1u64 << j;
        horizons.push(k);
        averages.push(&sum / k as f64);
    }
    let limit = limit_payoffs(&chain);
    let mut entries = Vec::new();
    for s in 0..game.states() {
        let x = chain.start[s];
        for i in 0..game.players() {
            let threshold = w[s][i];
            let seq: Vec<f64> = averages.iter().map(|a| a[(x, i)]).collect();
            let limit_pass = limit[x][i] - threshold >= -MARGIN_TOL;
            let average_pass =
                limit_pass && seq.last().is_some_and(|&v| v - threshold >= -MARGIN_TOL);
            entries.push(AverageEntry {
                state: s,
                player: i,
                threshold,
                averages: seq,
                limit: limit[x][i],
                average_pass,
                limit_pass,
            });
        }
    }
    AverageReport {
        horizons,
        average_pass: entries.iter().all(|e| e.average_pass),
        limit_pass: entries.iter().all(|e| e.limit_pass),
        entries,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IrEntry {
    pub state: usize,
    pub node: usize,
    pub player: usize,
    /// Deviation action with the largest continuation value.
    pub action: usize,
    pub deviation_value: f64,
    pub limit: f64,
    /// `deviation_value − limit`.
    pub excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IrReport {
    pub epsilon: f64,
    pub entries: Vec<IrEntry>,
    /// Largest excess over all reachable product states, players and actions.
    pub slack: f64,
    pub pass: bool,
}

/// For every reachable product state, player and action: the continuation
/// min-max value of deviating, against the others' part of the output,
/// compared with the limit continuation payoff.
pub fn check_individual_rationality(
    game: &StochasticGame,
    automaton: &JointAutomaton,
    v1: &[Vec<f64>],
    epsilon: f64,
) -> IrReport {
    let chain = automaton.product_chain(game);
    let limit = limit_payoffs(&chain);
    let mut entries = Vec::new();
    for (x, &(s, q)) in chain.pairs.iter().enumerate() {
        let joint = automaton.nodes[q].output.joint(game);
        for i in 0..game.players() {
            let split = game.split_profiles(i);
            // Distribution of the others' actions: mass of profiles by their
            // position in each own-action row.
            let others: Vec<f64> = (0..split[0].len())
                .map(|k| split.iter().map(|row| joint[row[k]]).sum())
                .collect();
            let mut best = (0, f64::NEG_INFINITY);
            for (b, row) in split.iter().enumerate() {
                let mut value = 0.0;
                for (k, &a) in row.iter().enumerate() {
                    if others[k] == 0.0 {
                        continue;
                    }
                    let cont: f64 = game
                        .transition(s, a)
                        .iter()
                        .enumerate()
                        .map(|(t, p)| p * v1[t][i])
                        .sum();
                    value += others[k] * cont;
                }
                if value > best.1 {
                    best = (b, value);
                }
            }
            entries.push(IrEntry {
                state: s,
                node: q,
                player: i,
                action: best.0,
                deviation_value: best.1,
                limit: limit[x][i],
                excess: best.1 - limit[x][i],
            });
        }
    }
    let slack = entries
        .iter()
        .map(|e| e.excess)
        .fold(f64::NEG_INFINITY, f64::max);
    IrReport {
        epsilon,
        pass: slack <= epsilon + IR_TOL,
        entries,
        slack,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Checkpoint {
    pub state: usize,
    pub node: usize,
    pub kind: BlockKind,
    /// Expected `v¹` at the next block start minus `v¹` now, per player.
    pub drift: Vec<f64>,
    /// Probability of never reaching the next block start.
    pub leak: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubmartingaleReport {
    pub checkpoints: Vec<Checkpoint>,
    pub min_drift: f64,
    pub max_leak: f64,
    pub pass: bool,
}

/// Drift of the value process between block starts. A block starts at
/// every transient stage and whenever play (re-)enters a type-B set; it
/// ends after one stage, or after the first stage that plays an exit of
/// the set. Type-A sets end the process.
pub fn check_submartingale(
    game: &StochasticGame,
    automaton: &JointAutomaton,
    v1: &[Vec<f64>],
    layout: &BlockLayout,
) -> SubmartingaleReport {
    let chain = automaton.product_chain(game);
    let players = game.players();
    let index: HashMap<(usize, usize), usize> = chain
        .pairs
        .iter()
        .enumerate()
        .map(|(x, &p)| (p, x))
        .collect();
    let mut checkpoints = Vec::new();

    for &(s, q) in &chain.pairs {
        if layout.kind[s] != BlockKind::Transient {
            continue;
        }
        let joint = automaton.nodes[q].output.joint(game);
        let next = game.mix_transition(s, &joint);
        let drift = (0..players)
            .map(|i| {
                next.iter()
                    .enumerate()
                    .map(|(t, p)| p * v1[t][i])
                    .sum::<f64>()
                    - v1[s][i]
            })
            .collect();
        checkpoints.push(Checkpoint {
            state: s,
            node: q,
            kind: BlockKind::Transient,
            drift,
            leak: 0.0,
        });
    }

    let exiting = layout.sets.iter().filter(|set| {
        set.first()
            .is_some_and(|&s| layout.kind[s] == BlockKind::Exiting)
    });
    for set in exiting {
        let inside = mask(game.states(), set);
        let local: Vec<usize> = (0..chain.pairs.len())
            .filter(|&x| inside[chain.pairs[x].0])
            .collect();
        let pos: HashMap<usize, usize> = local.iter().enumerate().map(|(r, &x)| (x, r)).collect();
        let k = local.len();
        let mut p = DMatrix::zeros(k, k);
        let mut b = DMatrix::zeros(k, players + 1);
        for (r, &x) in local.iter().enumerate() {
            let (s, q) = chain.pairs[x];
            let node = &automaton.nodes[q];
            for (a, w) in node.output.joint(game).into_iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let trans = game.transition(s, a);
                if !game.stays_in(s, a, &inside) {
                    b[(r, players)] += w;
                    for (t, &pt) in trans.iter().enumerate() {
                        for i in 0..players {
                            b[(r, i)] += w * pt * v1[t][i];
                        }
                    }
                    continue;
                }
                for (t, &pt) in trans.iter().enumerate() {
                    if pt == 0.0 {
                        continue;
                    }
                    for &(q2, g) in &node.next[a][t] {
                        if g == 0.0 {
                            continue;
                        }
                        let y = index[&(t, q2)];
                        p[(r, pos[&y])] += w * pt * g;
                    }
                }
            }
        }
        let h = stopped_values(&p, &b);
        for &s in set {
            let q = automaton.initial[s];
            let Some(&x) = index.get(&(s, q)) else {
                continue;
            };
            let r = pos[&x];
            let stop = h[(r, players)];
            let drift = (0..players)
                .map(|i| {
                    if stop > 0.0 {
                        h[(r, i)] / stop - v1[s][i]
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            checkpoints.push(Checkpoint {
                state: s,
                node: q,
                kind: BlockKind::Exiting,
                drift,
                leak: 1.0 - stop,
            });
        }
    }
    checkpoints.sort_by_key(|c| (c.state, c.node));
    let min_drift = checkpoints
        .iter()
        .flat_map(|c| c.drift.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let max_leak = checkpoints.iter().map(|c| c.leak).fold(0.0, f64::max);
    SubmartingaleReport {
        pass: min_drift >= -DRIFT_TOL && max_leak <= 1e-9,
        checkpoints,
        min_drift,
        max_leak,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeAudit {
    pub joint: usize,
    /// Size of each player's machine.
    pub per_player: Vec<usize>,
    pub bound: usize,
    pub pass: bool,
}

/// Per-player machine sizes against `|S|·|I|`, or `|S|` when `stationary`.
pub fn automaton_size_audit(
    game: &StochasticGame,
    automaton: &JointAutomaton,
    stationary: bool,
) -> SizeAudit {
    let bound = if stationary {
        game.states()
    } else {
        game.states() * game.players()
    };
    let per_player = (0..game.players())
        .map(|i| {
            automaton
                .player_view(game, i)
                .map_or(automaton.size(), |v| v.size())
        })
        .collect::<Vec<_>>();
    SizeAudit {
        joint: automaton.size(),
        pass: per_player.iter().all(|&k| k <= bound),
        per_player,
        bound,
    }
}

/// `γ^λ` from every initial state: `out[s][i]`.
pub fn discounted_table(
    game: &StochasticGame,
    automaton: &JointAutomaton,
    lambda: f64,
) -> Result<Vec<Vec<f64>>, GameError> {
    let chain = automaton.product_chain(game);
    let gamma = discounted_all(&chain, lambda)?;
    let all = rows(&gamma);
    Ok(chain.start.iter().map(|&x| all[x].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{StationaryCorrelated, StationaryProfile};

    fn sorin() -> StochasticGame {
        StochasticGame::from_json(include_str!("../games/sorin.json")).unwrap()
    }

    #[test]
    fn stationary_automaton_matches_linear_solve() {
        let g = sorin();
        let x = StationaryCorrelated::pure(&g, &[1, 0, 0]);
        let m = JointAutomaton::stationary(&g, &x);
        let direct = crate::game::discounted_payoffs(&g, &x, 0.9).unwrap();
        let via = discounted_table(&g, &m, 0.9).unwrap();
        assert_eq!(direct.len(), via.len());
        for (a, b) in direct.iter().flatten().zip(via.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_discount_equilibrium_is_not_acceptable() {
        let g = sorin();
        let x = StationaryProfile::new(
            &g,
            vec![
                vec![vec![1.0, 0.0], vec![2.0 / 3.0, 1.0 / 3.0]],
                vec![vec![1.0, 0.0], vec![1.0, 0.0]],
                vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            ],
        )
        .unwrap();
        let m = JointAutomaton::stationary_product(&g, &x);
        let v1 = vec![vec![2.0 / 3.0, 0.5], vec![0.0, 1.0], vec![2.0, 0.0]];
        let report = check_minmax_acceptable(&g, &m, &v1, 0.05, &DEFAULT_GRID).unwrap();
        let e = report.entry(0, 1).unwrap();
        assert!((e.limit - 1.0 / 3.0).abs() < 1e-12);
        assert!(!e.pass && !report.pass);
    }

    #[test]
    fn trivial_threshold_always_passes() {
        let g = sorin();
        let m = JointAutomaton::stationary(&g, &StationaryCorrelated::pure(&g, &[0, 0, 0]));
        let w = vec![vec![-1.0; 2]; 3];
        assert!(check_w_acceptable(&g, &m, &w, &DEFAULT_GRID).unwrap().pass);
        let avg = check_average_limit_acceptable(&g, &m, &w);
        assert!(avg.average_pass && avg.limit_pass);
    }

    #[test]
    fn immediate_absorption_averages() {
        let g = sorin();
        let bl = g.parse_profile_key("B/L").unwrap();
        let m = JointAutomaton::stationary(&g, &StationaryCorrelated::pure(&g, &[bl, 0, 0]));
        let avg = check_average_limit_acceptable(&g, &m, &vec![vec![-1.0; 2]; 3]);
        let e = &avg.entries[1];
        assert_eq!(e.state, 0);
        assert!((e.limit - 1.0).abs() < 1e-12);
        assert!((e.averages.last().unwrap() - 1.0).abs() < 1e-5);
    }
}
