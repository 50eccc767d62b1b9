//! Monte-Carlo harness.
//!
//! Trial `k` uses seed `base_seed + k` for both the scenario generator (when
//! the scenario is synthetic) and the solver initialisation. When both
//! algorithms run, they see the same scenario and the same seed. Trials run
//! one after another so that wall-clock figures are not skewed by contention
//! between trials; the per-node work inside each trial is still parallel.

use std::fs;
use std::path::PathBuf;

use jointloc_core::jcnl::WallClock;
use jointloc_core::model::generate_synthetic;
use jointloc_core::{
    run_jcnl, run_scnl, Monitor, NoMonitor, Scenario, ScnlParams, SolveResult, SolverParams,
    SyntheticConfig,
};
use serde::Serialize;

use crate::metrics_csv::save_metrics;
use crate::scenario_json::load_scenario;
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    File(PathBuf),
    /// Regenerated for every trial with that trial's seed.
    Synthetic(SyntheticConfig),
    /// Used as is for every trial.
    Fixed(Box<Scenario>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Jcnl,
    Scnl,
    Both,
}

impl Algorithm {
    fn runs(self) -> &'static [Algorithm] {
        match self {
            Algorithm::Jcnl => &[Algorithm::Jcnl],
            Algorithm::Scnl => &[Algorithm::Scnl],
            Algorithm::Both => &[Algorithm::Jcnl, Algorithm::Scnl],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Jcnl => "jcnl",
            Algorithm::Scnl => "scnl",
            Algorithm::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: ScenarioSource,
    pub algorithm: Algorithm,
    /// `seed` is the base seed; `max_iters` is the joint solver's budget.
    pub solver: SolverParams,
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    pub trials: usize,
    /// Where per-trial CSVs and `summary.json` go, if anywhere.
    pub out_dir: Option<PathBuf>,
    /// Record wall-clock times. Disable for byte-reproducible output.
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn scnl_params(&self, seed: u64) -> ScnlParams {
        ScnlParams {
            stage1_iters: self.stage1_iters,
            stage2_iters: self.stage2_iters,
            solver: SolverParams {
                seed,
                ..self.solver.clone()
            },
        }
    }

    fn validate(&self) -> Result<(), Error> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and population standard deviation; `None` for no samples.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Stat {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub final_rmse_sensor: Option<f64>,
    pub final_rmse_target: Option<f64>,
    pub wall_nanos: Option<u64>,
    pub stage_wall_nanos: Vec<Option<u64>>,
    pub target_estimate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageStat {
    pub name: String,
    pub wall_seconds: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub iterations: usize,
    pub final_rmse_sensor: Option<Stat>,
    pub final_rmse_target: Option<Stat>,
    pub wall_seconds: Option<Stat>,
    pub stages: Vec<StageStat>,
    pub messages_per_trial: f64,
    pub trials: Vec<TrialSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub base_seed: u64,
    pub algorithms: Vec<AlgorithmSummary>,
}

impl Summary {
    pub fn algorithm(&self, name: &str) -> Option<&AlgorithmSummary> {
        self.algorithms.iter().find(|a| a.algorithm == name)
    }

    pub fn to_json(&self) -> Result<String, Error> {
        serde_json::to_string_pretty(self).map_err(Error::Json)
    }
}

/// Runs one algorithm once on `scenario` with `seed`.
pub fn run_trial(
    scenario: &Scenario,
    algorithm: Algorithm,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<SolveResult, Error> {
    let mut clock = WallClock::default();
    let mut none = NoMonitor;
    let monitor: &mut dyn Monitor = if config.timing { &mut clock } else { &mut none };
    let result = match algorithm {
        Algorithm::Jcnl => run_jcnl(
            scenario,
            &SolverParams {
                seed,
                ..config.solver.clone()
            },
            monitor,
        )?,
        Algorithm::Scnl => run_scnl(scenario, &config.scnl_params(seed), monitor)?,
        Algorithm::Both => {
            return Err(Error::Config("run_trial takes a single algorithm".into()))
        }
    };
    Ok(result)
}

fn scenario_for(config: &ExperimentConfig, seed: u64) -> Result<Scenario, Error> {
    match &config.source {
        ScenarioSource::File(p) => load_scenario(p),
        ScenarioSource::Synthetic(s) => Ok(generate_synthetic(&SyntheticConfig {
            seed,
            ..s.clone()
        })?),
        ScenarioSource::Fixed(s) => Ok((**s).clone()),
    }
}

fn nanos_to_seconds(values: &[Option<u64>]) -> Option<Stat> {
    let v: Option<Vec<f64>> = values.iter().map(|n| n.map(|n| n as f64 * 1e-9)).collect();
    v.and_then(|v| Stat::of(&v))
}

fn summarize(algorithm: Algorithm, iterations: usize, trials: Vec<(TrialSummary, u64)>) -> AlgorithmSummary {
    let rs: Option<Vec<f64>> = trials.iter().map(|(t, _)| t.final_rmse_sensor).collect();
    let rt: Option<Vec<f64>> = trials.iter().map(|(t, _)| t.final_rmse_target).collect();
    let walls: Vec<Option<u64>> = trials.iter().map(|(t, _)| t.wall_nanos).collect();
    let n_stages = trials.first().map_or(0, |(t, _)| t.stage_wall_nanos.len());
    let names: &[&str] = match algorithm {
        Algorithm::Scnl => &["sensors", "target"],
        _ => &["joint"],
    };
    let stages = (0..n_stages)
        .map(|k| StageStat {
            name: names.get(k).copied().unwrap_or("stage").to_string(),
            wall_seconds: nanos_to_seconds(
                &trials.iter().map(|(t, _)| t.stage_wall_nanos[k]).collect::<Vec<_>>(),
            ),
        })
        .collect();
    let messages = trials.iter().map(|(_, m)| *m as f64).sum::<f64>() / trials.len().max(1) as f64;
    AlgorithmSummary {
        algorithm: algorithm.name().to_string(),
        iterations,
        final_rmse_sensor: rs.and_then(|v| Stat::of(&v)),
        final_rmse_target: rt.and_then(|v| Stat::of(&v)),
        wall_seconds: nanos_to_seconds(&walls),
        stages,
        messages_per_trial: messages,
        trials: trials.into_iter().map(|(t, _)| t).collect(),
    }
}

/// Runs every trial, writes outputs if an output directory is set, and
/// returns the summary.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary, Error> {
    config.validate()?;
    if let Some(dir) = &config.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let algos = config.algorithm.runs();
    let mut collected: Vec<Vec<(TrialSummary, u64)>> = vec![Vec::new(); algos.len()];
    let base = config.solver.seed;
    for trial in 0..config.trials {
        let seed = base + trial as u64;
        let scenario = scenario_for(config, seed)?;
        for (a, &algo) in algos.iter().enumerate() {
            let result = run_trial(&scenario, algo, config, seed)?;
            if let Some(dir) = &config.out_dir {
                save_metrics(
                    dir.join(format!("{}_trial{trial:03}.csv", algo.name())),
                    &result.trace,
                )?;
            }
            let last = result.last_record();
            collected[a].push((
                TrialSummary {
                    trial,
                    seed,
                    final_rmse_sensor: last.and_then(|r| r.rmse_sensor),
                    final_rmse_target: last.and_then(|r| r.rmse_target),
                    wall_nanos: result.wall_nanos(),
                    stage_wall_nanos: result.stages.iter().map(|s| s.wall_nanos).collect(),
                    target_estimate: result.target.clone(),
                },
                result.messages,
            ));
        }
    }
    let algorithms = algos
        .iter()
        .zip(collected)
        .map(|(&algo, trials)| {
            let iters = match algo {
                Algorithm::Scnl => config.stage1_iters + config.stage2_iters,
                _ => config.solver.max_iters,
            };
            summarize(algo, iters, trials)
        })
        .collect();
    let summary = Summary {
        trials: config.trials,
        base_seed: base,
        algorithms,
    };
    if let Some(dir) = &config.out_dir {
        let path = dir.join("summary.json");
        fs::write(&path, summary.to_json()? + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(summary)
}
