//! Games bundled with the crate.

use crate::game::StochasticGame;

/// Name and JSON text of every bundled game.
pub const GAMES: [(&str, &str); 5] = [
    ("sorin", include_str!("../games/sorin.json")),
    ("mdp3", include_str!("../games/mdp3.json")),
    ("quitting", include_str!("../games/quitting.json")),
    ("random5", include_str!("../games/random5.json")),
    ("three_player", include_str!("../games/three_player.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    GAMES.iter().map(|(name, _)| *name)
}

/// A bundled game by name. Panics only if a bundled file is broken, which
/// the tests rule out.
pub fn game(name: &str) -> Option<StochasticGame> {
    GAMES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| StochasticGame::from_json(text).expect("bundled games parse"))
}

/// Sorin's absorbing game: payoffs (1,0), (0,1) while the top row is played,
/// absorbing (0,1) after B/L and (2,0) after B/R.
pub fn sorin() -> StochasticGame {
    game("sorin").expect("sorin is bundled")
}
