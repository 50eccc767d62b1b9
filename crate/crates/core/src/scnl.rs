//! The two-stage baseline: localize the sensors cooperatively while ignoring
//! the target, then localize the target with every sensor pinned at its
//! stage-one estimate.
//!
//! Both stages reuse the joint engine. Stage one drops every target-coupled
//! block, so its iterates are those of a purely cooperative solver and do not
//! depend on the target ranges at all. Stage two turns every node into an
//! anchor; only the target blocks move. Its duals start from zero and its
//! target blocks from the same seeded draw the joint solver would use.

use alloc::vec::Vec;

use crate::jcnl::{
    init_states, mean_target, run_stage, Monitor, NoMonitor, SolveResult, SolverError,
    SolverParams, Stage, StageOutcome, StageSpan,
};
use crate::model::Scenario;
use crate::operators::BlockSet;

#[derive(Debug, Clone, PartialEq)]
pub struct ScnlParams {
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    /// Shared settings; `max_iters` is ignored in favour of the stage budgets.
    pub solver: SolverParams,
}

impl Default for ScnlParams {
    fn default() -> Self {
        ScnlParams {
            stage1_iters: 2000,
            stage2_iters: 2000,
            solver: SolverParams::default(),
        }
    }
}

impl ScnlParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.stage1_iters == 0 || self.stage2_iters == 0 {
            return Err(SolverError::InvalidParams("each stage needs at least one iteration"));
        }
        self.solver.validate()
    }

    pub fn total_iters(&self) -> usize {
        self.stage1_iters + self.stage2_iters
    }
}

fn stage1<M: Monitor + ?Sized>(
    scenario: &Scenario,
    params: &ScnlParams,
    monitor: &mut M,
) -> Result<StageOutcome, SolverError> {
    params.validate()?;
    let states = init_states(scenario, &params.solver, BlockSet::SensorOnly)?;
    let stage = Stage {
        scenario,
        blocks: BlockSet::SensorOnly,
        offset: 0,
        iters: params.stage1_iters,
        truth: scenario.truth().map(|t| (t, scenario.graph().anchor_mask())),
    };
    run_stage(states, &stage, &params.solver, None, monitor)
}

fn stage2<M: Monitor + ?Sized>(
    scenario: &Scenario,
    estimates: &[Vec<f64>],
    params: &ScnlParams,
    wall_before: Option<u64>,
    monitor: &mut M,
) -> Result<StageOutcome, SolverError> {
    params.validate()?;
    let anchored = scenario.anchored_at(estimates)?;
    let states = init_states(&anchored, &params.solver, BlockSet::TargetOnly)?;
    let stage = Stage {
        scenario: &anchored,
        blocks: BlockSet::TargetOnly,
        offset: params.stage1_iters,
        iters: params.stage2_iters,
        truth: scenario.truth().map(|t| (t, scenario.graph().anchor_mask())),
    };
    run_stage(states, &stage, &params.solver, wall_before, monitor)
}

/// Cooperative-only sensor localization; returns the position of every node.
pub fn run_stage1(scenario: &Scenario, params: &ScnlParams) -> Result<Vec<Vec<f64>>, SolverError> {
    let out = stage1(scenario, params, &mut NoMonitor)?;
    Ok(out.states.iter().map(|s| s.z.x().to_vec()).collect())
}

/// Target localization with every node anchored at `estimates[i]`.
pub fn run_stage2(
    scenario: &Scenario,
    estimates: &[Vec<f64>],
    params: &ScnlParams,
) -> Result<SolveResult, SolverError> {
    let out = stage2(scenario, estimates, params, None, &mut NoMonitor)?;
    Ok(assemble(scenario, None, out, params))
}

fn assemble(
    scenario: &Scenario,
    first: Option<StageOutcome>,
    second: StageOutcome,
    params: &ScnlParams,
) -> SolveResult {
    let node_targets: Vec<Vec<f64>> = second.states.iter().map(|s| s.z.y().to_vec()).collect();
    let positions = second.states.iter().map(|s| s.z.x().to_vec()).collect();
    let mut stages = Vec::new();
    let mut trace = Vec::new();
    let mut messages = 0;
    let mut iterations = 0;
    if let Some(first) = first {
        stages.push(StageSpan {
            name: "sensors",
            first_iter: 1,
            last_iter: first.iterations,
            wall_nanos: first.wall_nanos,
        });
        trace = first.trace;
        messages = first.messages;
        iterations = first.iterations;
    }
    stages.push(StageSpan {
        name: "target",
        first_iter: params.stage1_iters + 1,
        last_iter: params.stage1_iters + second.iterations,
        wall_nanos: second.wall_nanos,
    });
    trace.extend(second.trace);
    SolveResult {
        target: mean_target(&node_targets, scenario.dimension()),
        positions,
        node_targets,
        trace,
        stages,
        messages: messages + second.messages,
        iterations: iterations + second.iterations,
        states: second.states,
    }
}

/// Runs both stages; the trace covers iterations `1..=T₁+T₂` and carries no
/// target RMSE during stage one.
pub fn run_scnl<M: Monitor + ?Sized>(
    scenario: &Scenario,
    params: &ScnlParams,
    monitor: &mut M,
) -> Result<SolveResult, SolverError> {
    let first = stage1(scenario, params, monitor)?;
    let estimates: Vec<Vec<f64>> = first.states.iter().map(|s| s.z.x().to_vec()).collect();
    let second = stage2(scenario, &estimates, params, first.wall_nanos, monitor)?;
    Ok(assemble(scenario, Some(first), second, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::exact_scenario;
    use alloc::vec;

    fn square() -> Scenario {
        let pos = vec![
            vec![0.5, 0.4],
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ];
        let edges = [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (2, 3), (3, 4), (4, 1)];
        exact_scenario(&pos, &[0.3, 0.7], &[1, 2, 3, 4], &edges).unwrap()
    }

    fn params(t1: usize, t2: usize) -> ScnlParams {
        ScnlParams {
            stage1_iters: t1,
            stage2_iters: t2,
            solver: SolverParams {
                c: 0.5,
                rho: 0.5,
                record_every: 50,
                ..SolverParams::default()
            },
        }
    }

    #[test]
    fn trace_spans_both_stages_without_early_target_rmse() {
        let r = run_scnl(&square(), &params(100, 60), &mut NoMonitor).unwrap();
        assert_eq!(r.iterations, 160);
        assert_eq!(r.trace.last().unwrap().iter, 160);
        for m in &r.trace {
            assert_eq!(m.rmse_target.is_some(), m.iter > 100, "iter {}", m.iter);
            assert!(m.rmse_sensor.is_some());
        }
        assert_eq!(r.stages.len(), 2);
        assert_eq!((r.stages[1].first_iter, r.stages[1].last_iter), (101, 160));
    }

    #[test]
    fn zero_stage_is_rejected() {
        assert!(run_scnl(&square(), &params(0, 5), &mut NoMonitor).is_err());
    }

    #[test]
    fn stage_two_position_residuals_vanish() {
        let s = square();
        let truth = s.truth().unwrap().positions.clone();
        let r = run_stage2(&s, &truth, &params(1, 200)).unwrap();
        for st in &r.states {
            let a = crate::operators::apply_a(&st.z);
            for k in 0..st.neighbors.len() {
                assert_eq!(a.position(k), &[0.0, 0.0]);
            }
        }
        for (x, t) in r.positions.iter().zip(&truth) {
            assert_eq!(x, t);
        }
    }
}
