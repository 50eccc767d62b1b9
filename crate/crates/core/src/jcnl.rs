//! The joint sensor/target solver.
//!
//! Each round has two phases separated by barriers. First every node computes
//! its unconstrained minimiser `z̃_i = U_i⁻¹(H_iᵀD_i w_i - A_iᵀλ_i + cB_iᵀB_i z_i)`
//! and sends each neighbour the four copy blocks belonging to their shared
//! edge. Then every node merges its own `z̃_i` with the inbound blocks in
//! closed form, moves its directions along `D_i H_i z_i` and projects them back
//! onto the unit balls, and takes a dual ascent step on `λ_i`.
//!
//! Per-node work inside a phase touches only that node's state, so it may run
//! in parallel (feature `parallel`). All reductions over nodes run in node
//! order, which keeps traces bitwise reproducible for any thread count.

use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{self, DiagnosticsError, MetricsRecord};
use crate::model::{GroundTruth, ModelError, NodeId, Scenario};
use crate::operators::{
    apply_a, apply_a_transpose, apply_cbtb, apply_d, apply_h, apply_h_transpose,
    apply_u_inverse, project_unit_balls, BlockSet, Directions, Layout, Multipliers, NodeVector,
};

/// ChaCha stream used for initial iterates, kept apart from the stream that
/// scenario generation draws from so a shared seed does not correlate them.
const INIT_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum SolverError {
    InvalidParams(&'static str),
    /// No inbound message from this neighbour reached the combine step.
    MissingMessage(NodeId),
    Model(ModelError),
    Diagnostics(DiagnosticsError),
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::InvalidParams(m) => write!(f, "invalid solver parameters: {m}"),
            SolverError::MissingMessage(j) => write!(f, "missing message from neighbour {j}"),
            SolverError::Model(e) => write!(f, "{e}"),
            SolverError::Diagnostics(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SolverError {}

impl From<ModelError> for SolverError {
    fn from(e: ModelError) -> Self {
        SolverError::Model(e)
    }
}

impl From<DiagnosticsError> for SolverError {
    fn from(e: DiagnosticsError) -> Self {
        SolverError::Diagnostics(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Augmented-Lagrangian penalty `c`.
    pub c: f64,
    /// Proximal penalty on the directions.
    pub rho: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Initial coordinates are drawn uniformly from `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Metrics are recorded at every multiple of this plus the first and last iterations.
    pub record_every: usize,
    /// Stop at a recorded iteration once `P + S` falls below this value.
    pub early_exit_tol: Option<f64>,
    /// `(κ₁, κ₂)`; the potential is recorded only when these are given.
    pub potential_weights: Option<(f64, f64)>,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            c: 0.11,
            rho: 0.11,
            max_iters: 5000,
            seed: 0,
            init_scale: 1.0,
            record_every: 10,
            early_exit_tol: None,
            potential_weights: None,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(SolverError::InvalidParams("c must be positive"));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(SolverError::InvalidParams("rho must be positive"));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(SolverError::InvalidParams("init_scale must be finite and >= 0"));
        }
        if self.record_every == 0 {
            return Err(SolverError::InvalidParams("record_every must be >= 1"));
        }
        if let Some((k1, k2)) = self.potential_weights {
            if !(k1.is_finite() && k2.is_finite() && k1 >= 0.0 && k2 >= 0.0) {
                return Err(SolverError::InvalidParams("potential weights must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Everything one node knows and holds.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    /// Sorted neighbour ids; index `k` is the slot of every per-edge block.
    pub neighbors: Vec<NodeId>,
    pub z: NodeVector,
    pub w: Directions,
    pub lambda: Multipliers,
    /// Measured distances to the neighbours, in slot order.
    pub distances: Vec<f64>,
    /// Measured range to the target.
    pub range: f64,
    pub anchor: Option<Vec<f64>>,
}

impl NodeState {
    pub fn layout(&self) -> Layout {
        self.z.layout()
    }

    pub fn smooth_value(&self) -> f64 {
        diagnostics::smooth_value(&self.z, &self.w, &self.distances, self.range)
    }

    pub fn grad_z(&self) -> NodeVector {
        diagnostics::smooth_grad_z(&self.z, &self.w, &self.distances, self.range)
    }
}

/// The blocks of `z̃_i` that node `i` sends to neighbour `j` for their edge.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborMessage {
    pub sender: NodeId,
    pub receiver: NodeId,
    payload: Vec<f64>,
}

impl NeighborMessage {
    pub fn new(sender: NodeId, receiver: NodeId, dim: usize) -> Self {
        NeighborMessage {
            sender,
            receiver,
            payload: alloc::vec![0.0; 4 * dim],
        }
    }

    /// Message carrying the slot-`k` blocks of `z_tilde`, sent by `state`.
    pub fn from_z_tilde(state: &NodeState, z_tilde: &NodeVector, k: usize) -> Self {
        let mut m = NeighborMessage::new(state.id, state.neighbors[k], z_tilde.layout().dim);
        m.fill(z_tilde, k);
        m
    }

    fn dim(&self) -> usize {
        self.payload.len() / 4
    }

    pub fn fill(&mut self, z_tilde: &NodeVector, k: usize) {
        let n = self.dim();
        self.payload[..n].copy_from_slice(z_tilde.p_minus(k));
        self.payload[n..2 * n].copy_from_slice(z_tilde.p_plus(k));
        self.payload[2 * n..3 * n].copy_from_slice(z_tilde.q_minus(k));
        self.payload[3 * n..].copy_from_slice(z_tilde.q_plus(k));
    }

    pub fn p_tilde_minus(&self) -> &[f64] {
        &self.payload[..self.dim()]
    }

    pub fn p_tilde_plus(&self) -> &[f64] {
        let n = self.dim();
        &self.payload[n..2 * n]
    }

    pub fn q_tilde_minus(&self) -> &[f64] {
        let n = self.dim();
        &self.payload[2 * n..3 * n]
    }

    pub fn q_tilde_plus(&self) -> &[f64] {
        let n = self.dim();
        &self.payload[3 * n..]
    }
}

/// Builds every node's initial state: `z` uniform in `[-init_scale, init_scale]`,
/// `w = 0`, `λ = 0`, anchors clamped.
///
/// Coordinates are drawn node by node, all `(4N_i + 2) n` of them, whatever
/// `blocks` is, so every block set sees the same draw for the same seed. With
/// [`BlockSet::TargetOnly`] every node must be an anchor and the position
/// copies are set to the anchor positions they copy.
pub fn init_states(
    scenario: &Scenario,
    params: &SolverParams,
    blocks: BlockSet,
) -> Result<Vec<NodeState>, SolverError> {
    params.validate()?;
    let graph = scenario.graph();
    let dim = scenario.dimension();
    if blocks == BlockSet::TargetOnly && graph.num_anchors() != graph.num_nodes() {
        return Err(SolverError::InvalidParams(
            "target-only solving needs every node anchored",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(INIT_STREAM);
    let mut states = Vec::with_capacity(graph.num_nodes());
    for i in 0..graph.num_nodes() {
        let layout = Layout::new(dim, graph.degree(i)).with_blocks(blocks);
        let data = (0..layout.z_len())
            .map(|_| params.init_scale * (2.0 * rng.gen::<f64>() - 1.0))
            .collect();
        let mut z = NodeVector::from_vec(layout, data);
        let anchor = scenario.anchor_position(i).map(<[f64]>::to_vec);
        if let Some(a) = &anchor {
            z.x_mut().copy_from_slice(a);
        }
        if blocks == BlockSet::TargetOnly {
            for (k, &j) in graph.neighbors(i).iter().enumerate() {
                let own = scenario.anchor_position(i).ok_or(ModelError::MissingAnchorPosition(i))?;
                let other = scenario.anchor_position(j).ok_or(ModelError::MissingAnchorPosition(j))?;
                z.p_minus_mut(k).copy_from_slice(own);
                z.p_plus_mut(k).copy_from_slice(other);
            }
        }
        states.push(NodeState {
            id: i,
            neighbors: graph.neighbors(i).to_vec(),
            z,
            w: Directions::zeros(layout),
            lambda: Multipliers::zeros(layout),
            distances: scenario.neighbor_distances(i),
            range: scenario.target_range(i),
            anchor,
        });
    }
    Ok(states)
}

/// Copies the blocks of the families excluded by the layout from `src`.
fn restore_inactive(out: &mut NodeVector, src: &NodeVector) {
    let l = out.layout();
    for k in 0..l.degree {
        if !l.blocks.sensor() {
            out.p_minus_mut(k).copy_from_slice(src.p_minus(k));
            out.p_plus_mut(k).copy_from_slice(src.p_plus(k));
        }
        if !l.blocks.target() {
            out.q_minus_mut(k).copy_from_slice(src.q_minus(k));
            out.q_plus_mut(k).copy_from_slice(src.q_plus(k));
        }
    }
    if !l.blocks.target() {
        out.y_mut().copy_from_slice(src.y());
    }
}

/// `z̃_i = U_i⁻¹(H_iᵀD_i w_i - A_iᵀλ_i + cB_iᵀB_i z_i)`, with the position
/// block of an anchor reset to the anchor. Blocks outside the active families
/// keep their current values.
pub fn compute_z_tilde(state: &NodeState, c: f64) -> NodeVector {
    let mut rhs = apply_h_transpose(&apply_d(&state.w, &state.distances, state.range));
    rhs.axpy(-1.0, &apply_a_transpose(&state.lambda));
    rhs.axpy(1.0, &apply_cbtb(&state.z, c));
    let mut out = apply_u_inverse(&rhs, c);
    restore_inactive(&mut out, &state.z);
    if let Some(a) = &state.anchor {
        out.x_mut().copy_from_slice(a);
    }
    out
}

/// Closed-form projection of the stacked `z̃` onto the consensus set, as seen
/// from one node. `inbound[k]` must come from `state.neighbors[k]`.
pub fn combine_z_update(
    state: &NodeState,
    z_tilde: &NodeVector,
    inbound: &[&NeighborMessage],
    c: f64,
) -> Result<NodeVector, SolverError> {
    let l = z_tilde.layout();
    let mut z = z_tilde.clone();
    for (k, &j) in state.neighbors.iter().enumerate() {
        let msg = inbound
            .get(k)
            .filter(|m| m.sender == j && m.receiver == state.id)
            .ok_or(SolverError::MissingMessage(j))?;
        for a in 0..l.dim {
            if l.blocks.sensor() {
                z.p_minus_mut(k)[a] =
                    (c * z_tilde.p_minus(k)[a] + msg.p_tilde_plus()[a]) / (c + 1.0);
                z.p_plus_mut(k)[a] =
                    (z_tilde.p_plus(k)[a] + c * msg.p_tilde_minus()[a]) / (c + 1.0);
            }
            if l.blocks.target() {
                z.q_minus_mut(k)[a] = 0.5 * (z_tilde.q_minus(k)[a] + msg.q_tilde_plus()[a]);
                z.q_plus_mut(k)[a] = 0.5 * (z_tilde.q_plus(k)[a] + msg.q_tilde_minus()[a]);
            }
        }
    }
    if let Some(a) = &state.anchor {
        z.x_mut().copy_from_slice(a);
    }
    Ok(z)
}

/// `w_i ← proj(w_i + (1/ρ) D_i H_i z_i)`.
pub fn update_w(state: &NodeState, z_new: &NodeVector, rho: f64) -> Directions {
    let mut w = state.w.clone();
    w.axpy(1.0 / rho, &apply_d(&apply_h(z_new), &state.distances, state.range));
    project_unit_balls(&w)
}

/// `λ_i ← λ_i + c A_i z_i`.
pub fn update_lambda(state: &NodeState, z_new: &NodeVector, c: f64) -> Multipliers {
    let mut lambda = state.lambda.clone();
    lambda.axpy(c, &apply_a(z_new));
    lambda
}

/// Observer of a solver run.
pub trait Monitor {
    /// Monotonic time in nanoseconds, if a clock is available.
    fn clock(&mut self) -> Option<u64> {
        None
    }

    /// Called after every completed iteration.
    fn on_iteration(&mut self, _iter: usize, _states: &[NodeState]) {}

    fn on_record(&mut self, _record: &MetricsRecord) {}
}

/// A monitor that observes nothing and reports no timings.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoMonitor;

impl Monitor for NoMonitor {}

/// A monitor that only provides wall-clock time.
#[cfg(feature = "std")]
#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    origin: std::time::Instant,
}

#[cfg(feature = "std")]
impl Default for WallClock {
    fn default() -> Self {
        WallClock {
            origin: std::time::Instant::now(),
        }
    }
}

#[cfg(feature = "std")]
impl Monitor for WallClock {
    fn clock(&mut self) -> Option<u64> {
        Some(self.origin.elapsed().as_nanos() as u64)
    }
}

/// A contiguous range of iterations run with one block set.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSpan {
    pub name: &'static str,
    pub first_iter: usize,
    pub last_iter: usize,
    pub wall_nanos: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Final own-position block of every node (anchors included).
    pub positions: Vec<Vec<f64>>,
    /// Final target estimate held by every node.
    pub node_targets: Vec<Vec<f64>>,
    /// Mean of `node_targets`.
    pub target: Vec<f64>,
    pub trace: Vec<MetricsRecord>,
    pub stages: Vec<StageSpan>,
    /// Point-to-point messages exchanged over the whole run.
    pub messages: u64,
    pub iterations: usize,
    pub states: Vec<NodeState>,
}

impl SolveResult {
    /// Total solver time over all stages, if timed.
    pub fn wall_nanos(&self) -> Option<u64> {
        self.stages.iter().map(|s| s.wall_nanos).sum()
    }

    pub fn last_record(&self) -> Option<&MetricsRecord> {
        self.trace.last()
    }
}

pub(crate) fn mean_target(node_targets: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut mean = alloc::vec![0.0; dim];
    for y in node_targets {
        for (m, v) in mean.iter_mut().zip(y) {
            *m += v;
        }
    }
    let n = node_targets.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

#[cfg(feature = "parallel")]
fn map_nodes<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_nodes<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// How one engine run is wired into a larger solve.
pub(crate) struct Stage<'a> {
    /// The problem instance the engine iterates on.
    pub scenario: &'a Scenario,
    pub blocks: BlockSet,
    /// Global number of the iteration before this stage's first one.
    pub offset: usize,
    pub iters: usize,
    /// Ground truth and the agent set that sensor RMSE is taken over.
    pub truth: Option<(&'a GroundTruth, &'a [bool])>,
}

pub(crate) struct StageOutcome {
    pub states: Vec<NodeState>,
    pub trace: Vec<MetricsRecord>,
    pub messages: u64,
    pub iterations: usize,
    pub wall_nanos: Option<u64>,
}

fn record_at(t: usize, stage: &Stage<'_>, every: usize) -> bool {
    t == stage.offset + 1 || t.is_multiple_of(every) || t == stage.offset + stage.iters
}

fn make_record(
    t: usize,
    states: &[NodeState],
    prev: &[NodeState],
    stage: &Stage<'_>,
    params: &SolverParams,
    wall: Option<u64>,
) -> Result<MetricsRecord, SolverError> {
    let graph = stage.scenario.graph();
    let anchors = stage.scenario.anchor_positions();
    let (rmse_sensor, rmse_target) = match stage.truth {
        Some((truth, agent_mask)) => {
            let xs: Vec<Vec<f64>> = states.iter().map(|s| s.z.x().to_vec()).collect();
            let rs = diagnostics::rmse_sensor(&xs, &truth.positions, agent_mask).ok();
            let rt = stage.blocks.target().then(|| {
                let ys: Vec<Vec<f64>> = states.iter().map(|s| s.z.y().to_vec()).collect();
                diagnostics::rmse_target(&ys, &truth.target)
            });
            (rs, rt)
        }
        None => (None, None),
    };
    let potential = match params.potential_weights {
        Some((k1, k2)) => Some(diagnostics::potential(
            states, prev, params.c, params.rho, k1, k2,
        )?),
        None => None,
    };
    Ok(MetricsRecord {
        iter: t,
        rmse_sensor,
        rmse_target,
        s: diagnostics::stationarity_s(states),
        w: diagnostics::update_gap_w(states, prev)?,
        p: diagnostics::feasibility_p(states),
        g: diagnostics::optimality_gap_g(states, prev, graph, anchors)?,
        potential,
        wall_nanos: wall,
    })
}

/// Runs `stage.iters` bulk-synchronous rounds starting from `states`.
pub(crate) fn run_stage<M: Monitor + ?Sized>(
    mut states: Vec<NodeState>,
    stage: &Stage<'_>,
    params: &SolverParams,
    wall_before: Option<u64>,
    monitor: &mut M,
) -> Result<StageOutcome, SolverError> {
    let graph = stage.scenario.graph();
    let n = states.len();
    let c = params.c;
    let rho = params.rho;
    let mut outboxes: Vec<Vec<NeighborMessage>> = states
        .iter()
        .map(|s| {
            s.neighbors
                .iter()
                .map(|&j| NeighborMessage::new(s.id, j, s.layout().dim))
                .collect()
        })
        .collect();
    let per_round = graph.degree_sum() as u64;
    let mut trace = Vec::new();
    let mut messages = 0u64;
    let mut wall = monitor.clock().map(|_| 0u64);
    let mut done = 0;

    for t in stage.offset + 1..=stage.offset + stage.iters {
        let recording = record_at(t, stage, params.record_every);
        let prev = recording.then(|| states.clone());
        let start = monitor.clock();

        let z_tilde = map_nodes(n, |i| compute_z_tilde(&states[i], c));
        for (i, outbox) in outboxes.iter_mut().enumerate() {
            for (k, msg) in outbox.iter_mut().enumerate() {
                msg.fill(&z_tilde[i], k);
            }
        }
        messages += per_round;
        let updates = map_nodes(n, |i| {
            let s = &states[i];
            let inbound: Vec<&NeighborMessage> = (0..s.neighbors.len())
                .map(|k| &outboxes[s.neighbors[k]][graph.reverse_slot(i, k)])
                .collect();
            let z = combine_z_update(s, &z_tilde[i], &inbound, c)?;
            let w = update_w(s, &z, rho);
            let lambda = update_lambda(s, &z, c);
            Ok::<_, SolverError>((z, w, lambda))
        });
        for (s, u) in states.iter_mut().zip(updates) {
            let (z, w, lambda) = u?;
            s.z = z;
            s.w = w;
            s.lambda = lambda;
        }

        if let (Some(acc), Some(a), Some(b)) = (wall.as_mut(), start, monitor.clock()) {
            *acc += b.saturating_sub(a);
        }
        done += 1;
        monitor.on_iteration(t, &states);
        if let Some(prev) = prev {
            let total = match (wall_before, wall) {
                (Some(a), Some(b)) => Some(a + b),
                (None, b) => b,
                _ => None,
            };
            let rec = make_record(t, &states, &prev, stage, params, total)?;
            monitor.on_record(&rec);
            let stop = params
                .early_exit_tol
                .is_some_and(|tol| rec.p + rec.s < tol);
            trace.push(rec);
            if stop {
                break;
            }
        }
    }
    Ok(StageOutcome {
        states,
        trace,
        messages,
        iterations: done,
        wall_nanos: wall,
    })
}

/// Runs the joint solver for `params.max_iters` rounds.
pub fn run_jcnl<M: Monitor + ?Sized>(
    scenario: &Scenario,
    params: &SolverParams,
    monitor: &mut M,
) -> Result<SolveResult, SolverError> {
    let states = init_states(scenario, params, BlockSet::Joint)?;
    let stage = Stage {
        scenario,
        blocks: BlockSet::Joint,
        offset: 0,
        iters: params.max_iters,
        truth: scenario
            .truth()
            .map(|t| (t, scenario.graph().anchor_mask())),
    };
    let out = run_stage(states, &stage, params, None, monitor)?;
    let positions: Vec<Vec<f64>> = out.states.iter().map(|s| s.z.x().to_vec()).collect();
    let node_targets: Vec<Vec<f64>> = out.states.iter().map(|s| s.z.y().to_vec()).collect();
    Ok(SolveResult {
        target: mean_target(&node_targets, scenario.dimension()),
        positions,
        node_targets,
        trace: out.trace,
        stages: alloc::vec![StageSpan {
            name: "joint",
            first_iter: 1,
            last_iter: out.iterations,
            wall_nanos: out.wall_nanos,
        }],
        messages: out.messages,
        iterations: out.iterations,
        states: out.states,
    })
}
