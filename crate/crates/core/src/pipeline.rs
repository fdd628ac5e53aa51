//! End-to-end runs: values, equilibria, decomposition, synthesis and
//! verification under one configuration.

use rayon::prelude::*;
use serde::Serialize;

use crate::automaton::JointAutomaton;
use crate::builder::{
    build_correlated_stationary, classify_all, synthesize, BlockLayout, Classification,
    CorrelatedSynthesis, Synthesis, DEFAULT_EPSILON,
};
use crate::error::{GameError, PipelineError};
use crate::game::StochasticGame;
use crate::minmax::{default_schedule, minmax_report, MinMaxReport, DEFAULT_TOL};
use crate::one_shot::{build_auxiliary_game, enumerate_equilibria, EquilibriumSet, EXACT_EQ_TOL};
use crate::structure::{decompose, Decomposition, DEFAULT_TOL_V};
use crate::verifier::{
    automaton_size_audit, check_average_limit_acceptable, check_individual_rationality,
    check_minmax_acceptable, check_submartingale, shifted, AcceptabilityReport, AverageReport,
    IrReport, SizeAudit, SubmartingaleReport, DEFAULT_GRID,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub epsilon: f64,
    pub grid: Vec<f64>,
    pub tol_v: f64,
    pub eq_tol: f64,
    pub solver_tol: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            epsilon: DEFAULT_EPSILON,
            grid: DEFAULT_GRID.to_vec(),
            tol_v: DEFAULT_TOL_V,
            eq_tol: EXACT_EQ_TOL,
            solver_tol: DEFAULT_TOL,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.epsilon > 0.0) {
            return Err(PipelineError::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.grid.is_empty() || self.grid.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return Err(PipelineError::Config(
                "discount grid must lie in (0,1)".into(),
            ));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PipelineError::Config(
                "discount grid must be strictly increasing".into(),
            ));
        }
        for (name, v) in [
            ("tol-v", self.tol_v),
            ("eq-tol", self.eq_tol),
            ("solver tol", self.solver_tol),
        ] {
            if !(v > 0.0) {
                return Err(PipelineError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub minmax: MinMaxReport,
    /// Uniform min-max values, `v1[s][i]`.
    pub v1: Vec<Vec<f64>>,
    pub equilibria: Vec<EquilibriumSet>,
    pub decomposition: Decomposition,
}

pub fn solve_values(
    game: &StochasticGame,
    config: &RunConfig,
) -> Result<MinMaxReport, PipelineError> {
    Ok(minmax_report(game, &default_schedule(), config.solver_tol)?)
}

/// Equilibrium sets of every auxiliary game, seeded per state.
pub fn equilibria(
    game: &StochasticGame,
    v1: &[Vec<f64>],
    config: &RunConfig,
) -> Result<Vec<EquilibriumSet>, PipelineError> {
    Ok((0..game.states())
        .into_par_iter()
        .map(|s| {
            let aux = build_auxiliary_game(game, s, v1);
            enumerate_equilibria(&aux, config.eq_tol, config.seed.wrapping_add(s as u64))
        })
        .collect::<Result<_, _>>()?)
}

pub fn analyze(game: &StochasticGame, config: &RunConfig) -> Result<Analysis, PipelineError> {
    config.validate()?;
    game.validate().into_result()?;
    let minmax = solve_values(game, config)?;
    let v1 = minmax.by_state();
    let equilibria = equilibria(game, &v1, config)?;
    let decomposition = decompose(game, &equilibria, &v1, config.tol_v)?;
    Ok(Analysis {
        minmax,
        v1,
        equilibria,
        decomposition,
    })
}

pub fn build(
    game: &StochasticGame,
    config: &RunConfig,
) -> Result<(Analysis, Synthesis), PipelineError> {
    let analysis = analyze(game, config)?;
    let synthesis = synthesize(
        game,
        &analysis.decomposition,
        &analysis.v1,
        &analysis.equilibria,
        config.epsilon,
    )?;
    Ok((analysis, synthesis))
}

pub fn build_correlated(
    game: &StochasticGame,
    config: &RunConfig,
) -> Result<(Analysis, Vec<Classification>, CorrelatedSynthesis), PipelineError> {
    let analysis = analyze(game, config)?;
    let classes = classify_all(
        game,
        &analysis.decomposition,
        &analysis.v1,
        &analysis.equilibria,
        config.epsilon,
    )?;
    let correlated = build_correlated_stationary(
        game,
        &analysis.decomposition,
        &classes,
        &analysis.v1,
        config.epsilon,
    )?;
    Ok((analysis, classes, correlated))
}

/// Every check the verifier runs on one profile.
#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub acceptability: AcceptabilityReport,
    pub average: AverageReport,
    pub individual_rationality: IrReport,
    pub submartingale: SubmartingaleReport,
    pub size: SizeAudit,
    /// Discounted, average and limit acceptability and the size bound.
    pub pass: bool,
}

impl Verification {
    /// Every report passes, including individual rationality and the drift
    /// of the value process.
    pub fn all_pass(&self) -> bool {
        self.pass && self.individual_rationality.pass && self.submartingale.pass
    }
}

pub fn verify(
    game: &StochasticGame,
    automaton: &JointAutomaton,
    v1: &[Vec<f64>],
    layout: &BlockLayout,
    config: &RunConfig,
    stationary: bool,
) -> Result<Verification, GameError> {
    let acceptability = check_minmax_acceptable(game, automaton, v1, config.epsilon, &config.grid)?;
    let average = check_average_limit_acceptable(game, automaton, &shifted(v1, config.epsilon));
    let individual_rationality = check_individual_rationality(game, automaton, v1, config.epsilon);
    let submartingale = check_submartingale(game, automaton, v1, layout);
    let size = automaton_size_audit(game, automaton, stationary);
    let pass = acceptability.pass && average.average_pass && average.limit_pass && size.pass;
    Ok(Verification {
        acceptability,
        average,
        individual_rationality,
        submartingale,
        size,
        pass,
    })
}
