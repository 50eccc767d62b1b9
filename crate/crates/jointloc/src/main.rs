use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jointloc::experiment::{run_trial, Algorithm, ExperimentConfig, ScenarioSource};
use jointloc::{load_scenario, run_experiment, save_metrics, save_scenario, Error};
use jointloc_core::diagnostics::parameter_thresholds;
use jointloc_core::model::{generate_synthetic, NoiseKind};
use jointloc_core::{NoiseModel, SolverParams, SyntheticConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "jointloc", version, about = "Distributed joint sensor and target localization")]
struct Cli {
    /// Worker threads for per-node work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario file.
    Generate(GenerateArgs),
    /// Run one solver on a scenario.
    Solve(SolveArgs),
    /// Run both solvers on shared scenarios and seeds over several trials.
    Compare(CompareArgs),
    /// Print the sufficient parameter thresholds for a scenario.
    Thresholds(ThresholdArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 100 agents and 8 anchors in the unit square, range 0.3.
    UnitSquare,
    /// 490 agents and 10 anchors in the centred unit square, target at the origin.
    BenchmarkLike,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Awgn,
    Range,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Jcnl,
    Scnl,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "unit-square")]
    preset: Preset,
    #[arg(long, value_enum)]
    noise: Option<Noise>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    anchors: Option<usize>,
    #[arg(long)]
    range: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ParamArgs {
    #[arg(long, default_value_t = 0.11)]
    c: f64,
    #[arg(long, default_value_t = 0.11)]
    rho: f64,
    /// Joint solver iterations.
    #[arg(long, default_value_t = 4000)]
    iters: usize,
    #[arg(long, default_value_t = 2000)]
    stage1_iters: usize,
    #[arg(long, default_value_t = 2000)]
    stage2_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    init_scale: f64,
    #[arg(long, default_value_t = 10)]
    record_every: usize,
    /// Stop once P + S falls below this at a recorded iteration.
    #[arg(long)]
    early_exit: Option<f64>,
    /// Potential weight κ₁ (requires --kappa2).
    #[arg(long, requires = "kappa2")]
    kappa1: Option<f64>,
    #[arg(long, requires = "kappa1")]
    kappa2: Option<f64>,
    /// Leave the wall_nanos column empty so output is byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

impl ParamArgs {
    fn solver(&self) -> SolverParams {
        SolverParams {
            c: self.c,
            rho: self.rho,
            max_iters: self.iters,
            seed: self.seed,
            init_scale: self.init_scale,
            record_every: self.record_every,
            early_exit_tol: self.early_exit,
            potential_weights: self.kappa1.zip(self.kappa2),
        }
    }

    fn config(&self, source: ScenarioSource, algorithm: Algorithm, trials: usize, out_dir: Option<PathBuf>) -> ExperimentConfig {
        ExperimentConfig {
            source,
            algorithm,
            solver: self.solver(),
            stage1_iters: self.stage1_iters,
            stage2_iters: self.stage2_iters,
            trials,
            out_dir,
            timing: !self.no_timing,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum, default_value = "jcnl")]
    algo: Algo,
    #[command(flatten)]
    params: ParamArgs,
    /// Metrics CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Scenario file shared by every trial; otherwise a preset is regenerated per trial.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    c: f64,
    #[arg(long)]
    kappa1: Option<f64>,
    #[arg(long)]
    kappa2: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
}

fn preset_config(preset: Preset, seed: u64) -> SyntheticConfig {
    match preset {
        Preset::UnitSquare => SyntheticConfig::unit_square_100(NoiseKind::Awgn, seed),
        Preset::BenchmarkLike => SyntheticConfig::benchmark_like(seed),
    }
}

fn generate(a: GenerateArgs) -> Result<(), Error> {
    let mut cfg = preset_config(a.preset, a.seed);
    if a.noise.is_some() || a.sigma.is_some() {
        let kind = match a.noise {
            Some(Noise::Awgn) => NoiseKind::Awgn,
            Some(Noise::Range) => NoiseKind::RangeDependent,
            None => cfg.noise.kind,
        };
        cfg.noise = NoiseModel::new(kind, a.sigma.unwrap_or(cfg.noise.sigma_add))?;
    }
    if let Some(n) = a.agents {
        cfg.num_agents = n;
    }
    if let Some(n) = a.anchors {
        cfg.num_anchors = n;
    }
    if let Some(r) = a.range {
        cfg.comm_range = r;
    }
    let scenario = generate_synthetic(&cfg)?;
    save_scenario(&a.out, &scenario)?;
    let g = scenario.graph();
    println!(
        "wrote {}: {} nodes, {} anchors, {} edges",
        a.out.display(),
        g.num_nodes(),
        g.num_anchors(),
        g.num_edges()
    );
    Ok(())
}

fn solve(a: SolveArgs) -> Result<(), Error> {
    let scenario = load_scenario(&a.scenario)?;
    let algo = match a.algo {
        Algo::Jcnl => Algorithm::Jcnl,
        Algo::Scnl => Algorithm::Scnl,
    };
    let cfg = a.params.config(ScenarioSource::File(a.scenario.clone()), algo, 1, None);
    let result = run_trial(&scenario, algo, &cfg, a.params.seed)?;
    save_metrics(&a.out, &result.trace)?;
    let last = result.last_record();
    let report = json!({
        "algorithm": algo.name(),
        "iterations": result.iterations,
        "messages": result.messages,
        "final_rmse_sensor": last.and_then(|r| r.rmse_sensor),
        "final_rmse_target": last.and_then(|r| r.rmse_target),
        "target_estimate": result.target,
        "stages": result.stages.iter().map(|s| json!({
            "name": s.name,
            "first_iter": s.first_iter,
            "last_iter": s.last_iter,
            "wall_nanos": s.wall_nanos,
        })).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::Json)?);
    Ok(())
}

fn compare(a: CompareArgs) -> Result<(), Error> {
    let source = match (a.scenario, a.preset) {
        (Some(p), _) => ScenarioSource::File(p),
        (None, Some(preset)) => ScenarioSource::Synthetic(preset_config(preset, a.params.seed)),
        (None, None) => return Err(Error::Config("give --scenario or --preset".into())),
    };
    let cfg = a.params.config(source, Algorithm::Both, a.trials, Some(a.out_dir));
    let summary = run_experiment(&cfg)?;
    println!("{}", summary.to_json()?);
    Ok(())
}

fn thresholds(a: ThresholdArgs) -> Result<(), Error> {
    let scenario = load_scenario(&a.scenario)?;
    let r = parameter_thresholds(&scenario, a.c, a.kappa1, a.kappa2, a.rho);
    let report = json!({
        "c": r.c,
        "N_max": r.n_max,
        "N_sum": r.n_sum,
        "d_max": r.d_max,
        "tau_tilde_min": r.tau_tilde_min,
        "kappa1_min": r.kappa1_min,
        "kappa2_min": r.kappa2_min,
        "rho_min": r.rho_min,
        "satisfied": r.satisfied.map(|s| json!({
            "kappa1": s.kappa1,
            "kappa2": s.kappa2,
            "rho": s.rho,
            "all": s.all(),
        })),
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::Json)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Compare(a) => compare(a),
        Command::Thresholds(a) => thresholds(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
