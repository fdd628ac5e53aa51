use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acceptable::automaton::JointAutomaton;
use acceptable::builder::BlockLayout;
use acceptable::pipeline::{self, RunConfig, Verification};
use acceptable::simulate::{default_horizon, simulate, SimulationResult};
use acceptable::verifier::{check_minmax_acceptable, exact_discounted_payoff_automaton};
use acceptable::{corpus, BuildError, GameError, PipelineError, StationaryProfile, StochasticGame};
use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "acceptable",
    version,
    about = "Acceptable strategy profiles in stochastic games"
)]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Opts {
    /// Game JSON file, or the name of a bundled game.
    #[arg(long, global = true)]
    game: Option<String>,
    #[arg(long, global = true, default_value_t = 0.05)]
    epsilon: f64,
    /// Comma-separated discount factors, strictly increasing in (0, 1).
    #[arg(long, global = true, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for the JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    tol_v: Option<f64>,
    #[arg(long, global = true)]
    eq_tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a game file.
    Validate,
    /// Uniform min-max values.
    Solve,
    /// Communicating sets and transient states.
    Decompose,
    /// Synthesize the automaton profile.
    Build,
    /// Synthesize the stationary correlated profile.
    BuildCorrelated,
    /// Build and verify a profile.
    Verify {
        #[arg(long)]
        correlated: bool,
    },
    /// Compare simulated and exact discounted payoffs.
    Simulate {
        #[arg(long, default_value_t = 0.99)]
        lambda: f64,
        #[arg(long, default_value_t = 2000)]
        replications: usize,
        #[arg(long)]
        correlated: bool,
    },
    /// Run the full pipeline on Sorin's absorbing game.
    DemoSorin,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 2,
            error: error.into(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Config(_) => 2,
            PipelineError::Game(g) if is_input_error(g) => 2,
            _ => 1,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<GameError> for Failure {
    fn from(e: GameError) -> Self {
        let code = if is_input_error(&e) { 2 } else { 1 };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

fn is_input_error(e: &GameError) -> bool {
    matches!(
        e,
        GameError::Io(_) | GameError::Json(_) | GameError::Malformed { .. } | GameError::Invalid(_)
    )
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("AP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", describe(&f.error));
            ExitCode::from(f.code)
        }
    }
}

/// The error chain on one line, skipping causes their parent already quotes.
fn describe(error: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in error.chain() {
        let text = cause.to_string();
        if parts.last().is_some_and(|p| p.ends_with(&text)) {
            continue;
        }
        parts.push(text);
    }
    parts.join(": ")
}

fn run(cli: &Cli) -> Outcome {
    let config = run_config(&cli.opts)?;
    match &cli.command {
        Command::Validate => cmd_validate(&cli.opts),
        Command::Solve => cmd_solve(&cli.opts, &config),
        Command::Decompose => cmd_decompose(&cli.opts, &config),
        Command::Build => cmd_build(&cli.opts, &config),
        Command::BuildCorrelated => cmd_build_correlated(&cli.opts, &config),
        Command::Verify { correlated } => cmd_verify(&cli.opts, &config, *correlated),
        Command::Simulate {
            lambda,
            replications,
            correlated,
        } => cmd_simulate(&cli.opts, &config, *lambda, *replications, *correlated),
        Command::DemoSorin => cmd_demo_sorin(&cli.opts, &config),
    }
}

fn run_config(opts: &Opts) -> Result<RunConfig, Failure> {
    let mut config = RunConfig {
        epsilon: opts.epsilon,
        seed: opts.seed,
        ..RunConfig::default()
    };
    if let Some(grid) = &opts.lambda_grid {
        config.grid = grid.clone();
    }
    if let Some(t) = opts.tol_v {
        config.tol_v = t;
    }
    if let Some(t) = opts.eq_tol {
        config.eq_tol = t;
    }
    config.validate()?;
    Ok(config)
}

fn load_game(opts: &Opts) -> Result<StochasticGame, Failure> {
    let name = opts
        .game
        .as_deref()
        .ok_or_else(|| Failure::input(anyhow::anyhow!("--game is required")))?;
    let path = Path::new(name);
    if !path.exists() {
        if let Some(g) = corpus::game(name) {
            return Ok(g);
        }
    }
    StochasticGame::load(path)
        .with_context(|| format!("loading {name}"))
        .map_err(Failure::input)
}

fn write_artifact<T: Serialize>(opts: &Opts, command: &str, value: &T) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(&opts.out)
        .with_context(|| format!("creating {}", opts.out.display()))
        .map_err(Failure::input)?;
    let path = opts.out.join(format!("{command}.json"));
    let mut text = serde_json::to_string_pretty(value).context("serializing report")?;
    text.push('\n');
    std::fs::write(&path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::input)?;
    Ok(path)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn print_values(game: &StochasticGame, v1: &[Vec<f64>]) {
    for (s, v) in v1.iter().enumerate() {
        let vals: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
        println!("  v1({}) = ({})", game.state_name(s), vals.join(", "));
    }
}

#[derive(Serialize)]
struct ValidateArtifact {
    players: usize,
    states: Vec<String>,
    actions: Vec<usize>,
    violations: acceptable::game::ValidationReport,
}

fn cmd_validate(opts: &Opts) -> Outcome {
    let game = load_game(opts)?;
    let report = game.validate();
    let valid = report.is_valid();
    let artifact = ValidateArtifact {
        players: game.players(),
        states: game.state_names().to_vec(),
        actions: game.action_counts(),
        violations: report,
    };
    write_artifact(opts, "validate", &artifact)?;
    if valid {
        println!(
            "valid: {} players, {} states, {} profiles",
            game.players(),
            game.states(),
            game.profiles()
        );
        return Ok(true);
    }
    for v in &artifact.violations.violations {
        let at = match (&v.state, &v.profile) {
            (Some(s), Some(a)) => format!("({s},{a}): "),
            (Some(s), None) => format!("({s}): "),
            _ => String::new(),
        };
        eprintln!("{at}{}", v.message);
    }
    Err(Failure::input(anyhow::anyhow!(
        "{} violation(s)",
        artifact.violations.violations.len()
    )))
}

#[derive(Serialize)]
struct SolveArtifact<'a> {
    config: &'a RunConfig,
    v1: Vec<Vec<f64>>,
    minmax: acceptable::minmax::MinMaxReport,
}

fn cmd_solve(opts: &Opts, config: &RunConfig) -> Outcome {
    let game = load_game(opts)?;
    game.validate().into_result()?;
    let minmax = pipeline::solve_values(&game, config)?;
    let v1 = minmax.by_state();
    println!("uniform min-max values:");
    print_values(&game, &v1);
    if minmax.coalition_caveat {
        println!("  note: opponents treated as one correlated coalition");
    }
    let converged = minmax.all_converged();
    if !converged {
        println!("  warning: value estimates did not converge");
    }
    write_artifact(opts, "solve", &SolveArtifact { config, v1, minmax })?;
    Ok(true)
}

fn cmd_decompose(opts: &Opts, config: &RunConfig) -> Outcome {
    let game = load_game(opts)?;
    let analysis = pipeline::analyze(&game, config)?;
    let d = &analysis.decomposition;
    for set in &d.sets {
        let names: Vec<&str> = set.states.iter().map(|&s| game.state_name(s)).collect();
        println!("communicating set {{{}}}", names.join(", "));
    }
    let names: Vec<&str> = d.transient.iter().map(|&s| game.state_name(s)).collect();
    println!("transient {{{}}}", names.join(", "));
    for w in &d.warnings {
        println!("warning: {w}");
    }
    #[derive(Serialize)]
    struct Artifact<'a> {
        config: &'a RunConfig,
        v1: &'a [Vec<f64>],
        decomposition: &'a acceptable::structure::Decomposition,
    }
    write_artifact(
        opts,
        "decompose",
        &Artifact {
            config,
            v1: &analysis.v1,
            decomposition: d,
        },
    )?;
    Ok(true)
}

/// Maps an unclassifiable set to a FAIL verdict rather than an input error.
fn build_failure(e: PipelineError) -> Failure {
    if let PipelineError::Build(BuildError::Unclassifiable { set }) = &e {
        println!("FAIL: set {set:?} is unclassifiable");
    }
    e.into()
}

fn cmd_build(opts: &Opts, config: &RunConfig) -> Outcome {
    let game = load_game(opts)?;
    let (analysis, synthesis) = pipeline::build(&game, config).map_err(build_failure)?;
    for set in &synthesis.sets {
        let names: Vec<&str> = set.states.iter().map(|&s| game.state_name(s)).collect();
        println!(
            "set {{{}}}: {} ({} nodes)",
            names.join(", "),
            set.classification.kind(),
            set.nodes
        );
    }
    println!("automaton: {} nodes", synthesis.automaton.size());
    #[derive(Serialize)]
    struct Artifact<'a> {
        config: &'a RunConfig,
        v1: &'a [Vec<f64>],
        synthesis: &'a acceptable::builder::Synthesis,
    }
    write_artifact(
        opts,
        "build",
        &Artifact {
            config,
            v1: &analysis.v1,
            synthesis: &synthesis,
        },
    )?;
    Ok(true)
}

fn cmd_build_correlated(opts: &Opts, config: &RunConfig) -> Outcome {
    let game = load_game(opts)?;
    let (analysis, classes, correlated) =
        pipeline::build_correlated(&game, config).map_err(build_failure)?;
    for (set, class) in analysis.decomposition.sets.iter().zip(&classes) {
        let names: Vec<&str> = set.states.iter().map(|&s| game.state_name(s)).collect();
        println!("set {{{}}}: {}", names.join(", "), class.kind());
    }
    #[derive(Serialize)]
    struct Artifact<'a> {
        config: &'a RunConfig,
        v1: &'a [Vec<f64>],
        classes: &'a [acceptable::builder::Classification],
        correlated: &'a acceptable::builder::CorrelatedSynthesis,
    }
    write_artifact(
        opts,
        "build-correlated",
        &Artifact {
            config,
            v1: &analysis.v1,
            classes: &classes,
            correlated: &correlated,
        },
    )?;
    Ok(true)
}

/// The synthesized profile as a joint automaton.
struct Built {
    v1: Vec<Vec<f64>>,
    automaton: JointAutomaton,
    layout: BlockLayout,
}

fn build_profile(
    game: &StochasticGame,
    config: &RunConfig,
    correlated: bool,
) -> Result<Built, Failure> {
    if correlated {
        let (analysis, _, c) = pipeline::build_correlated(game, config).map_err(build_failure)?;
        Ok(Built {
            automaton: JointAutomaton::stationary(game, &c.profile),
            v1: analysis.v1,
            layout: c.layout,
        })
    } else {
        let (analysis, s) = pipeline::build(game, config).map_err(build_failure)?;
        Ok(Built {
            v1: analysis.v1,
            automaton: s.automaton,
            layout: s.layout,
        })
    }
}

fn print_verification(v: &Verification) {
    println!(
        "acceptability: {} (worst margin {:.3e})",
        verdict(v.acceptability.pass),
        v.acceptability.worst_margin
    );
    println!(
        "average: {}, limit: {}",
        verdict(v.average.average_pass),
        verdict(v.average.limit_pass)
    );
    println!(
        "individual rationality: {} (slack {:.4})",
        verdict(v.individual_rationality.pass),
        v.individual_rationality.slack
    );
    println!(
        "submartingale: {} (min drift {:.3e})",
        verdict(v.submartingale.pass),
        v.submartingale.min_drift
    );
    println!(
        "size: {} ({:?} <= {})",
        verdict(v.size.pass),
        v.size.per_player,
        v.size.bound
    );
}

fn cmd_verify(opts: &Opts, config: &RunConfig, correlated: bool) -> Outcome {
    let game = load_game(opts)?;
    let built = build_profile(&game, config, correlated)?;
    let v = pipeline::verify(
        &game,
        &built.automaton,
        &built.v1,
        &built.layout,
        config,
        correlated,
    )?;
    print_verification(&v);
    let pass = v.all_pass();
    println!("verdict: {}", verdict(pass));
    #[derive(Serialize)]
    struct Artifact<'a> {
        config: &'a RunConfig,
        correlated: bool,
        pass: bool,
        verification: &'a Verification,
    }
    write_artifact(
        opts,
        "verify",
        &Artifact {
            config,
            correlated,
            pass,
            verification: &v,
        },
    )?;
    Ok(pass)
}

/// Sample means further than this many standard errors from the exact
/// payoff count as a failure.
const SIM_SE: f64 = 4.0;

#[derive(Serialize)]
struct SimulationCheck {
    state: usize,
    exact: Vec<f64>,
    simulation: SimulationResult,
    pass: bool,
}

fn cmd_simulate(
    opts: &Opts,
    config: &RunConfig,
    lambda: f64,
    replications: usize,
    correlated: bool,
) -> Outcome {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Failure::input(anyhow::anyhow!(
            "--lambda must lie in [0, 1), got {lambda}"
        )));
    }
    let game = load_game(opts)?;
    let built = build_profile(&game, config, correlated)?;
    let horizon = default_horizon(lambda);
    // Payoff mass lost by stopping play at the horizon.
    let cut = game.payoff_bound() * lambda.powi(horizon as i32) + 1e-12;
    let mut checks = Vec::new();
    for s in 0..game.states() {
        let exact = exact_discounted_payoff_automaton(&game, &built.automaton, s, lambda)?;
        let sim = simulate(
            &game,
            &built.automaton,
            s,
            lambda,
            horizon,
            replications,
            config.seed,
        );
        let pass = exact
            .iter()
            .zip(sim.mean.iter().zip(&sim.std_err))
            .all(|(e, (m, se))| (e - m).abs() <= SIM_SE * se + cut);
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        println!(
            "{}: exact ({}) simulated ({}) {}",
            game.state_name(s),
            fmt(&exact),
            fmt(&sim.mean),
            verdict(pass)
        );
        checks.push(SimulationCheck {
            state: s,
            exact,
            simulation: sim,
            pass,
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    write_artifact(opts, "simulate", &checks)?;
    Ok(pass)
}

#[derive(Serialize)]
struct DemoArtifact<'a> {
    config: &'a RunConfig,
    v1: &'a [Vec<f64>],
    verification: &'a Verification,
    fixed_discount: &'a acceptable::verifier::AcceptabilityReport,
}

fn cmd_demo_sorin(opts: &Opts, config: &RunConfig) -> Outcome {
    let game = corpus::sorin();
    let (analysis, synthesis) = pipeline::build(&game, config).map_err(build_failure)?;
    println!("Sorin's absorbing game");
    println!("uniform min-max values:");
    print_values(&game, &analysis.v1);

    let v = pipeline::verify(
        &game,
        &synthesis.automaton,
        &analysis.v1,
        &synthesis.layout,
        config,
        false,
    )?;
    println!(
        "synthesized profile ({} nodes) is {}-acceptable: {}",
        synthesis.automaton.size(),
        config.epsilon,
        verdict(v.all_pass())
    );

    // Player 1 plays T, Player 2 mixes 2/3 L + 1/3 R: the limit of the
    // discounted equilibria, which pins Player 2 to 1/3 in the long run.
    let x = StationaryProfile::new(
        &game,
        vec![
            vec![vec![1.0, 0.0], vec![2.0 / 3.0, 1.0 / 3.0]],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        ],
    )?;
    let fixed = JointAutomaton::stationary_product(&game, &x);
    let report =
        check_minmax_acceptable(&game, &fixed, &analysis.v1, config.epsilon, &config.grid)?;
    let limit = report.entry(0, 1).map_or(f64::NAN, |e| e.limit);
    println!(
        "fixed-discount equilibrium (T, 2/3 L + 1/3 R): Player 2 limit payoff {limit:.4}, acceptable: {}",
        verdict(report.pass)
    );

    write_artifact(
        opts,
        "demo-sorin",
        &DemoArtifact {
            config,
            v1: &analysis.v1,
            verification: &v,
            fixed_discount: &report,
        },
    )?;
    // The demo succeeds when it reproduces both halves of the example.
    Ok(v.all_pass() && !report.pass)
}
