pub mod automaton;
pub mod builder;
pub mod chain;
pub mod corpus;
pub mod error;
pub mod frequencies;
pub mod game;
pub mod lp;
pub mod minmax;
pub mod one_shot;
pub mod pipeline;
pub mod random;
pub mod simulate;
pub mod structure;
pub mod verifier;

pub use error::{BuildError, GameError, PipelineError, SolveError, StructureError};
pub use game::{
    discounted_payoff_stationary, discounted_payoffs, CorrelatedMixedAction, PayoffVector,
    StationaryCorrelated, StationaryProfile, StochasticGame,
};
