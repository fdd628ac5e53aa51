//! Closed and irreducible sets, communicating sets under the equilibrium
//! correspondence, travel strategies and the transient profile.

use serde::Serialize;

use crate::chain::{bottom_components, reach_probability, recurrent_classes};
use crate::error::StructureError;
use crate::game::{StationaryCorrelated, StochasticGame};
use crate::one_shot::EquilibriumSet;

pub const DEFAULT_TOL_V: f64 = 1e-4;
/// Largest state count for which maximal sets are cross-checked by scanning
/// all subsets.
pub const EXHAUSTIVE_LIMIT: usize = 12;

/// Recurrent classes of the chain induced by a stationary profile.
pub fn irreducible_sets(game: &StochasticGame, profile: &StationaryCorrelated) -> Vec<Vec<usize>> {
    let (p, _) = profile.chain(game);
    recurrent_classes(&p)
}

/// Successor lists of the support digraph of the equilibrium sets: an edge
/// `s → t` whenever some listed equilibrium at `s` reaches `t`.
pub fn equilibrium_successors(game: &StochasticGame, eqs: &[EquilibriumSet]) -> Vec<Vec<usize>> {
    (0..game.states())
        .map(|s| {
            let mut reach = vec![false; game.states()];
            for profile in &eqs[s].profiles {
                let q = game.mix_transition(s, &profile.joint(game));
                for (t, &p) in q.iter().enumerate() {
                    if p > 0.0 {
                        reach[t] = true;
                    }
                }
            }
            (0..game.states()).filter(|&t| reach[t]).collect()
        })
        .collect()
}

/// Minimal sets closed under every listed equilibrium.
pub fn minimal_closed_sets(successors: &[Vec<usize>]) -> Vec<Vec<usize>> {
    bottom_components(successors)
}

pub(crate) fn mask(n: usize, states: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &s in states {
        m[s] = true;
    }
    m
}

/// A pure stationary profile that reaches `target` from every state of
/// `region ∖ target` with probability one, without ever playing a profile
/// that can leave `region`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TravelStrategy {
    pub region: Vec<usize>,
    pub target: Vec<usize>,
    /// `choice[s]` is the joint profile played at `s ∈ region ∖ target`.
    pub choice: Vec<Option<usize>>,
}

impl TravelStrategy {
    pub fn profile_at(&self, s: usize) -> Option<usize> {
        self.choice[s]
    }
}

/// States of `region` from which `target` can be reached almost surely
/// while staying in `region`, together with a pure witness.
///
/// Standard pruning: repeatedly discard states that cannot reach the target
/// with positive probability using profiles that stay in the remaining
/// region. The witness picks, layer by layer, the lowest-index profile that
/// stays in the region and moves closer to the target.
pub fn almost_sure_reach(
    game: &StochasticGame,
    region: &[bool],
    target: &[bool],
) -> (Vec<bool>, Vec<Option<usize>>) {
    let n = game.states();
    let mut alive: Vec<bool> = (0..n).map(|s| region[s] || target[s]).collect();
    loop {
        let mut reach: Vec<bool> = (0..n).map(|s| target[s] && alive[s]).collect();
        let mut changed = true;
        while changed {
            changed = false;
            for s in 0..n {
                if !alive[s] || reach[s] {
                    continue;
                }
                let ok = (0..game.profiles())
                    .any(|a| game.stays_in(s, a, &alive) && game.mass_into(s, a, &reach) > 0.0);
                if ok {
                    reach[s] = true;
                    changed = true;
                }
            }
        }
        if reach == alive {
            break;
        }
        alive = reach;
    }

    let mut choice = vec![None; n];
    let mut done: Vec<bool> = (0..n).map(|s| target[s] && alive[s]).collect();
    loop {
        let layer: Vec<(usize, usize)> = (0..n)
            .filter(|&s| alive[s] && !done[s])
            .filter_map(|s| {
                (0..game.profiles())
                    .find(|&a| game.stays_in(s, a, &alive) && game.mass_into(s, a, &done) > 0.0)
                    .map(|a| (s, a))
            })
            .collect();
        if layer.is_empty() {
            break;
        }
        for (s, a) in layer {
            choice[s] = Some(a);
            done[s] = true;
        }
    }
    (alive, choice)
}

/// Whether `s` leads in `C` to `t`, with a pure stationary witness.
pub fn leads_in(
    game: &StochasticGame,
    set: &[usize],
    s: usize,
    t: usize,
) -> (bool, Option<TravelStrategy>) {
    let region = mask(game.states(), set);
    let target = mask(game.states(), &[t]);
    let (win, choice) = almost_sure_reach(game, &region, &target);
    if !win[s] || !region[s] {
        return (false, None);
    }
    (
        true,
        Some(TravelStrategy {
            region: set.to_vec(),
            target: vec![t],
            choice,
        }),
    )
}

/// Travel strategy from `C ∖ D` to `D` inside `C`.
pub fn travel_strategy(
    game: &StochasticGame,
    set: &[usize],
    target: &[usize],
) -> Result<TravelStrategy, StructureError> {
    let region = mask(game.states(), set);
    let goal = mask(game.states(), target);
    let (win, choice) = almost_sure_reach(game, &region, &goal);
    if set.iter().any(|&s| !win[s]) {
        return Err(StructureError::TravelInfeasible {
            set: set.to_vec(),
            target: target.to_vec(),
        });
    }
    Ok(TravelStrategy {
        region: set.to_vec(),
        target: target.to_vec(),
        choice: choice
            .iter()
            .enumerate()
            .map(|(s, &c)| if region[s] && !goal[s] { c } else { None })
            .collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CommunicatingSet {
    pub states: Vec<usize>,
    /// Common uniform min-max value (mean over the set).
    pub value: Vec<f64>,
    /// `travel[k]` leads every state of the set to `states[k]`.
    pub travel: Vec<TravelStrategy>,
}

/// Direct check of the three defining conditions.
pub fn is_communicating(
    game: &StochasticGame,
    successors: &[Vec<usize>],
    v1: &[Vec<f64>],
    set: &[usize],
    tol_v: f64,
) -> bool {
    if set.is_empty() {
        return false;
    }
    let inside = mask(game.states(), set);
    let closed = set
        .iter()
        .all(|&s| successors[s].iter().all(|&t| inside[t]));
    if !closed {
        return false;
    }
    let spread_ok = (0..game.players()).all(|i| {
        let vals = set.iter().map(|&s| v1[s][i]);
        let hi = vals.clone().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.fold(f64::INFINITY, f64::min);
        hi - lo <= tol_v
    });
    if !spread_ok {
        return false;
    }
    set.iter().all(|&t| {
        let (win, _) = almost_sure_reach(game, &inside, &mask(game.states(), &[t]));
        set.iter().all(|&s| win[s])
    })
}

/// Largest communicating set containing the minimal closed set `core`, by
/// shrinking the candidate region until it is closed, every state reaches
/// `core` and `core` reaches every state.
fn grow_from(
    game: &StochasticGame,
    successors: &[Vec<usize>],
    v1: &[Vec<f64>],
    core: &[usize],
    tol_v: f64,
) -> Option<Vec<usize>> {
    let n = game.states();
    let mut x: Vec<bool> = (0..n)
        .map(|s| {
            core.iter()
                .all(|&k| (0..game.players()).all(|i| (v1[s][i] - v1[k][i]).abs() <= tol_v))
        })
        .collect();
    let core_mask = mask(n, core);
    loop {
        if core.iter().any(|&k| !x[k]) {
            return None;
        }
        let before = x.clone();
        for s in 0..n {
            if x[s] && successors[s].iter().any(|&t| !x[t]) {
                x[s] = false;
            }
        }
        let (to_core, _) = almost_sure_reach(game, &x, &core_mask);
        for s in 0..n {
            x[s] = x[s] && to_core[s];
        }
        for t in 0..n {
            if !x[t] || core_mask[t] {
                continue;
            }
            let (win, _) = almost_sure_reach(game, &x, &mask(n, &[t]));
            if core.iter().any(|&k| !win[k]) {
                x[t] = false;
            }
        }
        if x == before {
            break;
        }
    }
    let set: Vec<usize> = (0..n).filter(|&s| x[s]).collect();
    is_communicating(game, successors, v1, &set, tol_v).then_some(set)
}

/// Maximal communicating sets by scanning every subset.
pub fn maximal_communicating_exhaustive(
    game: &StochasticGame,
    successors: &[Vec<usize>],
    v1: &[Vec<f64>],
    tol_v: f64,
) -> Vec<Vec<usize>> {
    let n = game.states();
    let mut found: Vec<u64> = Vec::new();
    for bits in 1u64..(1u64 << n) {
        let set: Vec<usize> = (0..n).filter(|&s| bits & (1 << s) != 0).collect();
        if is_communicating(game, successors, v1, &set, tol_v) {
            found.push(bits);
        }
    }
    let mut maximal: Vec<Vec<usize>> = found
        .iter()
        .filter(|&&b| !found.iter().any(|&c| c != b && c & b == b))
        .map(|&b| (0..n).filter(|&s| b & (1 << s) != 0).collect())
        .collect();
    maximal.sort();
    maximal
}

#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub sets: Vec<CommunicatingSet>,
    /// `set_of[s]` is the index of the maximal set containing `s`.
    pub set_of: Vec<Option<usize>>,
    pub transient: Vec<usize>,
    /// Independent mixed actions per player at each transient state.
    pub transient_profile: Vec<Option<Vec<Vec<f64>>>>,
    pub warnings: Vec<String>,
}

impl Decomposition {
    pub fn union(&self) -> Vec<usize> {
        (0..self.set_of.len())
            .filter(|&s| self.set_of[s].is_some())
            .collect()
    }
}

/// Maximal communicating sets, with the subset scan as a cross-check when
/// the game is small enough.
pub fn maximal_communicating_sets(
    game: &StochasticGame,
    eqs: &[EquilibriumSet],
    v1: &[Vec<f64>],
    tol_v: f64,
) -> Result<(Vec<CommunicatingSet>, Vec<String>), StructureError> {
    let successors = equilibrium_successors(game, eqs);
    let mut warnings = Vec::new();
    let mut sets: Vec<Vec<usize>> = Vec::new();
    for core in minimal_closed_sets(&successors) {
        match grow_from(game, &successors, v1, &core, tol_v) {
            Some(set) => {
                if !sets.contains(&set) {
                    sets.push(set);
                }
            }
            None => warnings.push(format!(
                "minimal closed set {core:?} is not communicating at tol_v {tol_v:e}"
            )),
        }
    }
    sets.sort();
    let overlapping = sets.iter().enumerate().any(|(k, a)| {
        sets[k + 1..]
            .iter()
            .any(|b| a.iter().any(|s| b.contains(s)))
    });
    if overlapping {
        warnings.push("maximal communicating sets overlap".into());
    }
    if game.states() <= EXHAUSTIVE_LIMIT {
        let scanned = maximal_communicating_exhaustive(game, &successors, v1, tol_v);
        if scanned != sets {
            warnings.push(format!(
                "growth search found {sets:?} but subset scan found {scanned:?}; using the scan"
            ));
            sets = scanned;
        }
    } else {
        warnings.push(format!(
            "{} states exceed the subset-scan limit of {EXHAUSTIVE_LIMIT}; maximality not cross-checked",
            game.states()
        ));
    }

    let mut out = Vec::with_capacity(sets.len());
    for states in sets {
        let value = (0..game.players())
            .map(|i| states.iter().map(|&s| v1[s][i]).sum::<f64>() / states.len() as f64)
            .collect();
        let travel = states
            .iter()
            .map(|&t| travel_strategy(game, &states, &[t]))
            .collect::<Result<_, _>>()?;
        out.push(CommunicatingSet {
            states,
            value,
            travel,
        });
    }
    Ok((out, warnings))
}

/// Stationary profile on the transient states built by layered induction:
/// each state plays a listed equilibrium (pure ones first) that moves with
/// positive probability into the states already covered.
pub fn transient_profile(
    game: &StochasticGame,
    eqs: &[EquilibriumSet],
    union: &[usize],
) -> Result<Vec<Option<Vec<Vec<f64>>>>, StructureError> {
    let n = game.states();
    let mut covered = mask(n, union);
    let mut profile: Vec<Option<Vec<Vec<f64>>>> = vec![None; n];
    loop {
        let pending: Vec<usize> = (0..n).filter(|&s| !covered[s]).collect();
        if pending.is_empty() {
            break;
        }
        let mut layer = Vec::new();
        for &s in &pending {
            let mut candidates: Vec<&crate::one_shot::EquilibriumProfile> =
                eqs[s].profiles.iter().filter(|p| p.is_pure()).collect();
            candidates.extend(eqs[s].profiles.iter().filter(|p| !p.is_pure()));
            let pick = candidates.into_iter().find(|p| {
                let q = game.mix_transition(s, &p.joint(game));
                q.iter().zip(&covered).any(|(&pr, &c)| c && pr > 0.0)
            });
            if let Some(p) = pick {
                layer.push((s, p.actions.clone()));
            }
        }
        if layer.is_empty() {
            return Err(StructureError::TransientStalled { stuck: pending });
        }
        for (s, x) in layer {
            covered[s] = true;
            profile[s] = Some(x);
        }
    }

    // Absorption check on the chain that freezes the union.
    let mut p = nalgebra::DMatrix::zeros(n, n);
    for s in 0..n {
        match &profile[s] {
            Some(x) => {
                let q = game.mix_transition(s, &game.product(x));
                for t in 0..n {
                    p[(s, t)] = q[t];
                }
            }
            None => p[(s, s)] = 1.0,
        }
    }
    let h = reach_probability(&p, &mask(n, union));
    if let Some(s) = (0..n).find(|&s| (h[s] - 1.0).abs() > 1e-9) {
        return Err(StructureError::TransientStalled { stuck: vec![s] });
    }
    Ok(profile)
}

/// Full decomposition: maximal sets, transient states and transient profile.
pub fn decompose(
    game: &StochasticGame,
    eqs: &[EquilibriumSet],
    v1: &[Vec<f64>],
    tol_v: f64,
) -> Result<Decomposition, StructureError> {
    let (sets, warnings) = maximal_communicating_sets(game, eqs, v1, tol_v)?;
    let n = game.states();
    let mut set_of = vec![None; n];
    for (k, c) in sets.iter().enumerate() {
        for &s in &c.states {
            set_of[s] = Some(k);
        }
    }
    let union: Vec<usize> = (0..n).filter(|&s| set_of[s].is_some()).collect();
    let transient: Vec<usize> = (0..n).filter(|&s| set_of[s].is_none()).collect();
    let transient_profile = transient_profile(game, eqs, &union)?;
    Ok(Decomposition {
        sets,
        set_of,
        transient,
        transient_profile,
        warnings,
    })
}
