//! Finite stochastic games: representation, file format, validation and the
//! multilinear extensions of payoffs and transitions.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::GameError;

/// Tolerance for probability distributions.
pub const DIST_TOL: f64 = 1e-12;

/// One real per player.
pub type PayoffVector = Vec<f64>;

/// A finite stochastic game with state-independent action sets.
///
/// Action profiles are indexed in mixed radix with player 0 most significant,
/// so for two players with actions `{T,B}` and `{L,R}` the order is
/// `T/L, T/R, B/L, B/R`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGame {
    state_names: Vec<String>,
    action_names: Vec<Vec<String>>,
    /// `payoffs[s][a][i]`
    payoffs: Vec<Vec<Vec<f64>>>,
    /// `transitions[s][a][t]`
    transitions: Vec<Vec<Vec<f64>>>,
    payoff_bound: f64,
    strides: Vec<usize>,
    profile_count: usize,
}

impl StochasticGame {
    /// Builds a game after checking dimensions. Numerical invariants are
    /// checked separately by [`StochasticGame::validate`].
    pub fn new(
        state_names: Vec<String>,
        action_names: Vec<Vec<String>>,
        payoffs: Vec<Vec<Vec<f64>>>,
        transitions: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, GameError> {
        if state_names.is_empty() {
            return Err(GameError::malformed("states", "no states"));
        }
        if action_names.is_empty() {
            return Err(GameError::malformed("actions", "no players"));
        }
        for (i, acts) in action_names.iter().enumerate() {
            if acts.is_empty() {
                return Err(GameError::malformed(
                    format!("actions[{i}]"),
                    "player has no actions",
                ));
            }
            for name in acts {
                if name.contains('/') || name.is_empty() {
                    return Err(GameError::malformed(
                        format!("actions[{i}]"),
                        format!("invalid action name {name:?}"),
                    ));
                }
            }
            if has_duplicates(acts) {
                return Err(GameError::malformed(
                    format!("actions[{i}]"),
                    "duplicate action name",
                ));
            }
        }
        if has_duplicates(&state_names) {
            return Err(GameError::malformed("states", "duplicate state name"));
        }

        let n = state_names.len();
        let players = action_names.len();
        let mut strides = vec![1; players];
        for i in (0..players.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * action_names[i + 1].len();
        }
        let profile_count = strides[0] * action_names[0].len();

        if payoffs.len() != n || transitions.len() != n {
            return Err(GameError::malformed(
                "payoffs/transitions",
                "one table per state required",
            ));
        }
        for s in 0..n {
            if payoffs[s].len() != profile_count || transitions[s].len() != profile_count {
                return Err(GameError::malformed(
                    state_names[s].clone(),
                    format!("expected {profile_count} action profiles"),
                ));
            }
            for a in 0..profile_count {
                if payoffs[s][a].len() != players {
                    return Err(GameError::malformed(
                        state_names[s].clone(),
                        format!("payoff vector must have {players} entries"),
                    ));
                }
                if transitions[s][a].len() != n {
                    return Err(GameError::malformed(
                        state_names[s].clone(),
                        format!("transition row must have {n} entries"),
                    ));
                }
            }
        }

        Ok(StochasticGame {
            state_names,
            action_names,
            payoffs,
            transitions,
            payoff_bound: 1.0,
            strides,
            profile_count,
        })
    }

    /// Builds a game from a closure returning `(payoff, transition)` for each
    /// state and action profile. State and action names are generated.
    pub fn from_fn<F>(states: usize, actions: &[usize], mut f: F) -> Result<Self, GameError>
    where
        F: FnMut(usize, &[usize]) -> (Vec<f64>, Vec<f64>),
    {
        let state_names = (0..states).map(|s| format!("s{s}")).collect();
        let action_names: Vec<Vec<String>> = actions
            .iter()
            .enumerate()
            .map(|(i, &k)| (0..k).map(|a| format!("p{i}a{a}")).collect())
            .collect();
        let profiles: usize = actions.iter().product();
        let mut payoffs = Vec::with_capacity(states);
        let mut transitions = Vec::with_capacity(states);
        for s in 0..states {
            let mut pay = Vec::with_capacity(profiles);
            let mut tr = Vec::with_capacity(profiles);
            for a in 0..profiles {
                let acts = decode(a, actions);
                let (u, q) = f(s, &acts);
                pay.push(u);
                tr.push(q);
            }
            payoffs.push(pay);
            transitions.push(tr);
        }
        StochasticGame::new(state_names, action_names, payoffs, transitions)
    }

    pub fn with_payoff_bound(mut self, bound: f64) -> Self {
        self.payoff_bound = bound;
        self
    }

    pub fn players(&self) -> usize {
        self.action_names.len()
    }

    pub fn states(&self) -> usize {
        self.state_names.len()
    }

    pub fn profiles(&self) -> usize {
        self.profile_count
    }

    pub fn action_count(&self, player: usize) -> usize {
        self.action_names[player].len()
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.action_names.iter().map(Vec::len).collect()
    }

    pub fn payoff_bound(&self) -> f64 {
        self.payoff_bound
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.state_names[s]
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_name(&self, player: usize, action: usize) -> &str {
        &self.action_names[player][action]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn payoff(&self, s: usize, a: usize) -> &[f64] {
        &self.payoffs[s][a]
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        &self.transitions[s][a]
    }

    /// Per-player actions of a joint profile index.
    pub fn profile_actions(&self, a: usize) -> Vec<usize> {
        (0..self.players()).map(|i| self.action_of(a, i)).collect()
    }

    pub fn action_of(&self, a: usize, player: usize) -> usize {
        (a / self.strides[player]) % self.action_names[player].len()
    }

    pub fn profile_index(&self, actions: &[usize]) -> usize {
        actions
            .iter()
            .zip(&self.strides)
            .map(|(&a, &stride)| a * stride)
            .sum()
    }

    /// The profile obtained from `a` when `player` switches to `action`.
    pub fn deviate(&self, a: usize, player: usize, action: usize) -> usize {
        let current = self.action_of(a, player);
        a - current * self.strides[player] + action * self.strides[player]
    }

    /// The "/"-joined action names of a profile.
    pub fn profile_key(&self, a: usize) -> String {
        self.profile_actions(a)
            .iter()
            .enumerate()
            .map(|(i, &b)| self.action_names[i][b].as_str())
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn parse_profile_key(&self, key: &str) -> Result<usize, String> {
        let parts: Vec<&str> = key.split('/').collect();
        if parts.len() != self.players() {
            return Err(format!(
                "profile key {key:?} must name {} actions",
                self.players()
            ));
        }
        let mut actions = Vec::with_capacity(parts.len());
        for (i, part) in parts.iter().enumerate() {
            match self.action_names[i].iter().position(|n| n == part) {
                Some(b) => actions.push(b),
                None => return Err(format!("unknown action {part:?} for player {i}")),
            }
        }
        Ok(self.profile_index(&actions))
    }

    /// Number of joint action profiles of all players other than `player`.
    pub fn opponent_profiles(&self, player: usize) -> usize {
        self.profile_count / self.action_count(player)
    }

    /// Table `t[a_i][b]` giving the joint profile where `player` plays `a_i`
    /// and the others play their `b`-th joint profile (others in player
    /// order, mixed radix).
    pub fn split_profiles(&self, player: usize) -> Vec<Vec<usize>> {
        let own = self.action_count(player);
        let mut table = vec![Vec::with_capacity(self.opponent_profiles(player)); own];
        for a in 0..self.profile_count {
            table[self.action_of(a, player)].push(a);
        }
        table
    }

    /// Probability that profile `a` at `s` leads into the states flagged in `set`.
    pub fn mass_into(&self, s: usize, a: usize, set: &[bool]) -> f64 {
        self.transitions[s][a]
            .iter()
            .zip(set)
            .filter(|(_, &inside)| inside)
            .map(|(p, _)| p)
            .sum()
    }

    /// Whether `a` at `s` keeps play inside `set` with probability one.
    pub fn stays_in(&self, s: usize, a: usize, set: &[bool]) -> bool {
        self.transitions[s][a]
            .iter()
            .zip(set)
            .all(|(&p, &inside)| inside || p <= 0.0)
    }

    /// Joint distribution over profiles of independent per-player mixed actions.
    pub fn product(&self, mixed: &[Vec<f64>]) -> Vec<f64> {
        (0..self.profile_count)
            .map(|a| {
                mixed
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x[self.action_of(a, i)])
                    .product()
            })
            .collect()
    }

    /// Marginal of `player` under a correlated action.
    pub fn marginal(&self, weights: &[f64], player: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.action_count(player)];
        for (a, &w) in weights.iter().enumerate() {
            m[self.action_of(a, player)] += w;
        }
        m
    }

    /// Multilinear extension of the transition function.
    pub fn extend_transition(
        &self,
        s: usize,
        alpha: &CorrelatedMixedAction,
    ) -> Result<Vec<f64>, GameError> {
        self.check_action(s, alpha)?;
        Ok(self.mix_transition(s, alpha.weights()))
    }

    /// Multilinear extension of the payoff function.
    pub fn extend_payoff(
        &self,
        s: usize,
        alpha: &CorrelatedMixedAction,
    ) -> Result<PayoffVector, GameError> {
        self.check_action(s, alpha)?;
        Ok(self.mix_payoff(s, alpha.weights()))
    }

    pub(crate) fn mix_transition(&self, s: usize, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.states()];
        for (a, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(&self.transitions[s][a]) {
                *o += w * p;
            }
        }
        out
    }

    pub(crate) fn mix_payoff(&self, s: usize, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.players()];
        for (a, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &u) in out.iter_mut().zip(&self.payoffs[s][a]) {
                *o += w * u;
            }
        }
        out
    }

    fn check_action(&self, s: usize, alpha: &CorrelatedMixedAction) -> Result<(), GameError> {
        if s >= self.states() {
            return Err(GameError::InvalidAction {
                state: s,
                message: "state out of range".into(),
            });
        }
        if alpha.weights().len() != self.profile_count {
            return Err(GameError::InvalidAction {
                state: s,
                message: format!(
                    "expected {} weights, got {}",
                    self.profile_count,
                    alpha.weights().len()
                ),
            });
        }
        Ok(())
    }

    /// Checks the numerical invariants: distributions and payoff range.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let bound = self.payoff_bound;
        if !(bound.is_finite() && bound > 0.0) {
            violations.push(Violation {
                state: None,
                profile: None,
                message: format!("payoff bound {bound} must be positive and finite"),
            });
        }
        for s in 0..self.states() {
            for a in 0..self.profile_count {
                let at = format!("({},{})", self.state_names[s], self.profile_key(a));
                let push = |violations: &mut Vec<Violation>, message: String| {
                    violations.push(Violation {
                        state: Some(self.state_names[s].clone()),
                        profile: Some(self.profile_key(a)),
                        message,
                    })
                };
                for (i, &u) in self.payoffs[s][a].iter().enumerate() {
                    if !u.is_finite() || u.abs() > bound {
                        push(
                            &mut violations,
                            format!("payoff {u} of player {i} outside [-{bound},{bound}] at {at}"),
                        );
                    }
                }
                let row = &self.transitions[s][a];
                for (t, &p) in row.iter().enumerate() {
                    if !p.is_finite() || p < 0.0 {
                        push(
                            &mut violations,
                            format!(
                                "invalid transition probability {p} to {} at {at}",
                                self.state_names[t]
                            ),
                        );
                    }
                }
                let mass: f64 = row.iter().sum();
                if !mass.is_finite() || (mass - 1.0).abs() > DIST_TOL {
                    push(&mut violations, format!("transition mass {mass} at {at}"));
                }
            }
        }
        ValidationReport { violations }
    }

    /// Parses a game document. Structural problems are reported as
    /// [`GameError::Malformed`] with the offending location.
    pub fn from_json(text: &str) -> Result<Self, GameError> {
        let file: GameFile = serde_json::from_str(text)?;
        StochasticGame::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GameError> {
        let text = std::fs::read_to_string(path)?;
        StochasticGame::from_json(&text)
    }

    pub fn from_file(file: GameFile) -> Result<Self, GameError> {
        if file.players != file.actions.len() {
            return Err(GameError::malformed(
                "players",
                format!(
                    "declares {} players but {} action lists",
                    file.players,
                    file.actions.len()
                ),
            ));
        }
        let n = file.states.len();
        let players = file.players;
        let profiles: usize = file.actions.iter().map(Vec::len).product();
        let mut payoffs = vec![vec![Vec::new(); profiles]; n];
        let transitions = vec![vec![vec![0.0; n]; profiles]; n];
        // Build a shell game to reuse the key parser and dimension checks.
        let shell = StochasticGame::new(
            file.states.clone(),
            file.actions.clone(),
            vec![vec![vec![0.0; players]; profiles]; n],
            transitions,
        )?;
        let mut transitions = vec![vec![vec![0.0; n]; profiles]; n];

        for state in file.payoffs.keys().chain(file.transitions.keys()) {
            if shell.state_index(state).is_none() {
                return Err(GameError::malformed(state.clone(), "unknown state"));
            }
        }
        for s in 0..n {
            let name = &file.states[s];
            let table = file.payoffs.get(name).ok_or_else(|| {
                GameError::malformed(format!("payoffs.{name}"), "missing payoff table")
            })?;
            for (key, u) in table {
                let loc = format!("payoffs.{name}.{key}");
                let a = shell
                    .parse_profile_key(key)
                    .map_err(|m| GameError::malformed(loc.clone(), m))?;
                if u.len() != players {
                    return Err(GameError::malformed(
                        loc,
                        format!("expected {players} payoffs, got {}", u.len()),
                    ));
                }
                payoffs[s][a] = u.clone();
            }
            if let Some(a) = payoffs[s].iter().position(Vec::is_empty) {
                return Err(GameError::malformed(
                    format!("payoffs.{name}.{}", shell.profile_key(a)),
                    "missing payoff entry",
                ));
            }
            if let Some(table) = file.transitions.get(name) {
                for (key, row) in table {
                    let loc = format!("transitions.{name}.{key}");
                    let a = shell
                        .parse_profile_key(key)
                        .map_err(|m| GameError::malformed(loc.clone(), m))?;
                    for (target, &p) in row {
                        let t = shell.state_index(target).ok_or_else(|| {
                            GameError::malformed(loc.clone(), format!("unknown state {target:?}"))
                        })?;
                        transitions[s][a][t] = p;
                    }
                }
            }
        }
        let game = StochasticGame::new(file.states, file.actions, payoffs, transitions)?;
        Ok(match file.payoff_bound {
            Some(b) => game.with_payoff_bound(b),
            None => game,
        })
    }

    /// The file representation, with zero transition entries omitted.
    pub fn to_file(&self) -> GameFile {
        let mut payoffs = BTreeMap::new();
        let mut transitions = BTreeMap::new();
        for s in 0..self.states() {
            let mut pay = BTreeMap::new();
            let mut tr = BTreeMap::new();
            for a in 0..self.profile_count {
                let key = self.profile_key(a);
                pay.insert(key.clone(), self.payoffs[s][a].clone());
                let row: BTreeMap<String, f64> = self.transitions[s][a]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(t, &p)| (self.state_names[t].clone(), p))
                    .collect();
                tr.insert(key, row);
            }
            payoffs.insert(self.state_names[s].clone(), pay);
            transitions.insert(self.state_names[s].clone(), tr);
        }
        GameFile {
            players: self.players(),
            states: self.state_names.clone(),
            actions: self.action_names.clone(),
            payoffs,
            transitions,
            payoff_bound: (self.payoff_bound != 1.0).then_some(self.payoff_bound),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("game serializes")
    }
}

fn has_duplicates(names: &[String]) -> bool {
    let mut sorted: Vec<&String> = names.iter().collect();
    sorted.sort();
    sorted.windows(2).any(|w| w[0] == w[1])
}

/// Mixed-radix decoding with the first coordinate most significant.
pub(crate) fn decode(mut index: usize, radix: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radix.len()];
    for i in (0..radix.len()).rev() {
        out[i] = index % radix[i];
        index /= radix[i];
    }
    out
}

/// On-disk game format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub players: usize,
    pub states: Vec<String>,
    pub actions: Vec<Vec<String>>,
    pub payoffs: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    pub transitions: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    /// Payoffs must lie in `[-payoff_bound, payoff_bound]`; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub state: Option<String>,
    pub profile: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<(), GameError> {
        if self.is_valid() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.violations.into_iter().map(|v| v.message).collect();
            Err(GameError::Invalid(msgs.join("; ")))
        }
    }
}

/// A distribution over joint action profiles at one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedMixedAction {
    weights: Vec<f64>,
}

impl CorrelatedMixedAction {
    pub fn new(weights: Vec<f64>) -> Result<Self, GameError> {
        check_distribution(&weights)
            .map_err(|message| GameError::InvalidAction { state: 0, message })?;
        Ok(CorrelatedMixedAction { weights })
    }

    pub fn point(profiles: usize, a: usize) -> Self {
        let mut weights = vec![0.0; profiles];
        weights[a] = 1.0;
        CorrelatedMixedAction { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

pub(crate) fn check_distribution(weights: &[f64]) -> Result<(), String> {
    if weights.is_empty() {
        return Err("empty distribution".into());
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(format!("invalid weight {w}"));
    }
    let mass: f64 = weights.iter().sum();
    if (mass - 1.0).abs() > DIST_TOL {
        return Err(format!("weights sum to {mass}"));
    }
    Ok(())
}

/// Independent mixed actions per state and player: `actions[s][i][a_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryProfile {
    pub actions: Vec<Vec<Vec<f64>>>,
}

impl StationaryProfile {
    pub fn new(game: &StochasticGame, actions: Vec<Vec<Vec<f64>>>) -> Result<Self, GameError> {
        if actions.len() != game.states() {
            return Err(GameError::malformed(
                "profile",
                "one entry per state required",
            ));
        }
        for (s, per_player) in actions.iter().enumerate() {
            if per_player.len() != game.players() {
                return Err(GameError::InvalidAction {
                    state: s,
                    message: "one mixed action per player required".into(),
                });
            }
            for (i, x) in per_player.iter().enumerate() {
                if x.len() != game.action_count(i) {
                    return Err(GameError::InvalidAction {
                        state: s,
                        message: format!("player {i} mixed action has wrong length"),
                    });
                }
                check_distribution(x)
                    .map_err(|message| GameError::InvalidAction { state: s, message })?;
            }
        }
        Ok(StationaryProfile { actions })
    }

    /// The pure stationary profile playing joint profile `choice[s]` at `s`.
    pub fn pure(game: &StochasticGame, choice: &[usize]) -> Self {
        let actions = choice
            .iter()
            .map(|&a| {
                (0..game.players())
                    .map(|i| {
                        let mut x = vec![0.0; game.action_count(i)];
                        x[game.action_of(a, i)] = 1.0;
                        x
                    })
                    .collect()
            })
            .collect();
        StationaryProfile { actions }
    }

    pub fn to_correlated(&self, game: &StochasticGame) -> StationaryCorrelated {
        StationaryCorrelated {
            actions: self.actions.iter().map(|x| game.product(x)).collect(),
        }
    }
}

/// A correlated mixed action per state: `actions[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryCorrelated {
    pub actions: Vec<Vec<f64>>,
}

impl StationaryCorrelated {
    pub fn new(game: &StochasticGame, actions: Vec<Vec<f64>>) -> Result<Self, GameError> {
        if actions.len() != game.states() {
            return Err(GameError::malformed(
                "profile",
                "one entry per state required",
            ));
        }
        for (s, w) in actions.iter().enumerate() {
            if w.len() != game.profiles() {
                return Err(GameError::InvalidAction {
                    state: s,
                    message: "wrong number of profile weights".into(),
                });
            }
            check_distribution(w)
                .map_err(|message| GameError::InvalidAction { state: s, message })?;
        }
        Ok(StationaryCorrelated { actions })
    }

    pub fn pure(game: &StochasticGame, choice: &[usize]) -> Self {
        StationaryCorrelated {
            actions: choice
                .iter()
                .map(|&a| CorrelatedMixedAction::point(game.profiles(), a).weights)
                .collect(),
        }
    }

    /// Transition matrix and per-player stage payoffs of the induced chain.
    pub fn chain(&self, game: &StochasticGame) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = game.states();
        let mut p = DMatrix::zeros(n, n);
        let mut r = DMatrix::zeros(n, game.players());
        for s in 0..n {
            let row = game.mix_transition(s, &self.actions[s]);
            let u = game.mix_payoff(s, &self.actions[s]);
            for t in 0..n {
                p[(s, t)] = row[t];
            }
            for i in 0..game.players() {
                r[(s, i)] = u[i];
            }
        }
        (p, r)
    }

    /// Whether every state plays a single profile; returns the choice.
    pub fn as_pure(&self) -> Option<Vec<usize>> {
        self.actions
            .iter()
            .map(|w| w.iter().position(|&x| x == 1.0))
            .collect()
    }
}

pub(crate) fn check_discount(lambda: f64) -> Result<(), GameError> {
    if (0.0..1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(GameError::Discount(lambda))
    }
}

/// Solves `γ = (1-λ) r + λ P γ`, one column per player.
pub(crate) fn discounted_solve(
    p: &DMatrix<f64>,
    r: &DMatrix<f64>,
    lambda: f64,
) -> Option<DMatrix<f64>> {
    let n = p.nrows();
    let a = DMatrix::identity(n, n) - p * lambda;
    a.lu().solve(&(r * (1.0 - lambda)))
}

/// λ-discounted payoff of a stationary correlated profile from every state:
/// `out[s][i]`.
pub fn discounted_payoffs(
    game: &StochasticGame,
    profile: &StationaryCorrelated,
    lambda: f64,
) -> Result<Vec<PayoffVector>, GameError> {
    check_discount(lambda)?;
    let (p, r) = profile.chain(game);
    let gamma = discounted_solve(&p, &r, lambda)
        .ok_or_else(|| GameError::Invalid("singular discounted system".into()))?;
    Ok(rows(&gamma))
}

/// λ-discounted payoff of a stationary correlated profile from `s1`.
pub fn discounted_payoff_stationary(
    game: &StochasticGame,
    s1: usize,
    profile: &StationaryCorrelated,
    lambda: f64,
) -> Result<PayoffVector, GameError> {
    Ok(discounted_payoffs(game, profile, lambda)?.swap_remove(s1))
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorin() -> StochasticGame {
        StochasticGame::from_json(include_str!("../games/sorin.json")).unwrap()
    }

    #[test]
    fn profile_indexing_round_trips() {
        let g = StochasticGame::from_fn(1, &[2, 3, 2], |_, _| (vec![0.0; 3], vec![1.0])).unwrap();
        assert_eq!(g.profiles(), 12);
        for a in 0..12 {
            assert_eq!(g.profile_index(&g.profile_actions(a)), a);
        }
        assert_eq!(g.profile_actions(7), vec![1, 0, 1]);
        assert_eq!(g.deviate(7, 1, 2), g.profile_index(&[1, 2, 1]));
        let split = g.split_profiles(1);
        assert_eq!(split.len(), 3);
        assert!(split.iter().all(|row| row.len() == 4));
        assert_eq!(split[2][3], g.profile_index(&[1, 2, 1]));
    }

    #[test]
    fn sorin_is_valid() {
        let g = sorin();
        assert!(g.validate().is_valid(), "{:?}", g.validate());
        assert_eq!(g.players(), 2);
        assert_eq!(g.payoff_bound(), 2.0);
    }

    #[test]
    fn short_transition_mass_is_reported() {
        let g = StochasticGame::from_fn(1, &[1], |_, _| (vec![0.0], vec![0.9])).unwrap();
        let report = g.validate();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(
            report.violations[0].message,
            "transition mass 0.9 at (s0,p0a0)"
        );
    }

    #[test]
    fn payoff_out_of_range_is_reported() {
        let g = StochasticGame::from_fn(1, &[1], |_, _| (vec![1.5], vec![1.0])).unwrap();
        assert!(!g.validate().is_valid());
    }

    #[test]
    fn sorin_extensions() {
        let g = sorin();
        let s0 = g.state_index("s0").unwrap();
        let tl = g.parse_profile_key("T/L").unwrap();
        let br = g.parse_profile_key("B/R").unwrap();
        let tr = g.parse_profile_key("T/R").unwrap();
        let point = CorrelatedMixedAction::point(4, tl);
        let q = g.extend_transition(s0, &point).unwrap();
        assert_eq!(q[s0], 1.0);
        assert_eq!(g.extend_payoff(s0, &point).unwrap(), vec![1.0, 0.0]);
        let point = CorrelatedMixedAction::point(4, br);
        assert_eq!(g.extend_payoff(s0, &point).unwrap(), vec![2.0, 0.0]);
        let mut w = vec![0.0; 4];
        w[tl] = 0.5;
        w[tr] = 0.5;
        let half = CorrelatedMixedAction::new(w).unwrap();
        assert_eq!(g.extend_payoff(s0, &half).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn extension_is_linear() {
        let g = StochasticGame::from_fn(3, &[2, 2], |s, a| {
            let x = (s * 4 + a[0] * 2 + a[1]) as f64;
            let p = [
                (x * 0.37).sin().abs() + 0.1,
                (x * 1.3).cos().abs() + 0.1,
                0.2,
            ];
            let m: f64 = p.iter().sum();
            (
                vec![(x * 0.1).sin(), (x * 0.2).cos()],
                p.iter().map(|v| v / m).collect(),
            )
        })
        .unwrap();
        let a = CorrelatedMixedAction::point(4, 1);
        let b = CorrelatedMixedAction::point(4, 2);
        let mix = CorrelatedMixedAction::new(vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        let qa = g.extend_transition(2, &a).unwrap();
        let qb = g.extend_transition(2, &b).unwrap();
        let qm = g.extend_transition(2, &mix).unwrap();
        for t in 0..3 {
            assert!((qm[t] - 0.5 * (qa[t] + qb[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_correlated_action_is_rejected() {
        assert!(CorrelatedMixedAction::new(vec![0.5, 0.4]).is_err());
        assert!(CorrelatedMixedAction::new(vec![1.2, -0.2]).is_err());
    }

    #[test]
    fn constant_stream_has_constant_value() {
        let g = StochasticGame::from_fn(1, &[1], |_, _| (vec![0.3], vec![1.0])).unwrap();
        let x = StationaryCorrelated::pure(&g, &[0]);
        for lambda in [0.0, 0.5, 0.99] {
            let v = discounted_payoff_stationary(&g, 0, &x, lambda).unwrap();
            assert!((v[0] - 0.3).abs() < 1e-12);
        }
        assert!(discounted_payoff_stationary(&g, 0, &x, 1.0).is_err());
    }

    #[test]
    fn sorin_immediate_absorption() {
        let g = sorin();
        let s0 = g.state_index("s0").unwrap();
        let bl = g.parse_profile_key("B/L").unwrap();
        let mut choice = vec![0; g.states()];
        choice[s0] = bl;
        let x = StationaryCorrelated::pure(&g, &choice);
        let v = discounted_payoff_stationary(&g, s0, &x, 0.5).unwrap();
        // Stage 1 pays (0,1) and the absorbing state pays (0,1) forever.
        assert!((v[0] - 0.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn file_round_trip() {
        let g = sorin();
        let back = StochasticGame::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn malformed_key_has_location() {
        let text = r#"{"players":1,"states":["a"],"actions":[["x"]],
            "payoffs":{"a":{"y":[0.0]}},"transitions":{"a":{"x":{"a":1.0}}}}"#;
        let err = StochasticGame::from_json(text).unwrap_err().to_string();
        assert!(err.contains("payoffs.a.y"), "{err}");
    }
}
