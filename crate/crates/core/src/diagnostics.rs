//! Convergence certificates and error metrics.
//!
//! Everything here is a pure function of solver snapshots. The smooth part of
//! a node's local objective is
//! `G_i(z_i, w_i) = ½‖H_i z_i‖² - w_iᵀ D_i H_i z_i`;
//! the full local objective adds the indicator of the unit balls on `w_i`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::jcnl::NodeState;
use crate::math;
use crate::model::{Graph, NodeId, Scenario};
use crate::operators::{
    apply_a, apply_a_transpose, apply_cbtb, apply_d, apply_h, apply_h_transpose, project_xy,
    Directions, Layout, NodeVector,
};

/// Slack allowed on the unit-ball constraint before `w` counts as infeasible.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum DiagnosticsError {
    NoGroundTruth,
    AllAnchors,
    /// A direction block of this node lies outside the unit ball.
    InfeasibleW(NodeId),
    LengthMismatch,
}

impl fmt::Display for DiagnosticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagnosticsError::NoGroundTruth => f.write_str("scenario has no ground truth"),
            DiagnosticsError::AllAnchors => f.write_str("every node is an anchor"),
            DiagnosticsError::InfeasibleW(i) => {
                write!(f, "node {i} holds a direction outside the unit ball")
            }
            DiagnosticsError::LengthMismatch => f.write_str("snapshots differ in node count"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DiagnosticsError {}

/// One row of the metrics trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub iter: usize,
    pub rmse_sensor: Option<f64>,
    pub rmse_target: Option<f64>,
    /// Stationarity gap.
    pub s: f64,
    /// Squared change of the directions.
    pub w: f64,
    /// Squared consensus residual.
    pub p: f64,
    /// Optimality gap.
    pub g: f64,
    pub potential: Option<f64>,
    /// Cumulative solver time, excluding the cost of computing this record.
    pub wall_nanos: Option<u64>,
}

/// `sqrt(Σ_{agents} ‖x̂_i - x_i‖² / #agents)`.
pub fn rmse_sensor(
    estimates: &[Vec<f64>],
    truth: &[Vec<f64>],
    anchor_mask: &[bool],
) -> Result<f64, DiagnosticsError> {
    if estimates.len() != truth.len() || truth.len() != anchor_mask.len() {
        return Err(DiagnosticsError::LengthMismatch);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((e, t), &is_anchor) in estimates.iter().zip(truth).zip(anchor_mask) {
        if !is_anchor {
            sum += math::dist_sq(e, t);
            count += 1;
        }
    }
    if count == 0 {
        return Err(DiagnosticsError::AllAnchors);
    }
    Ok(math::sqrt(sum / count as f64))
}

/// `sqrt(Σ_i ‖ŷ_i - y‖² / N)` over every node's target estimate.
pub fn rmse_target(estimates: &[Vec<f64>], truth: &[f64]) -> f64 {
    if estimates.is_empty() {
        return 0.0;
    }
    let sum: f64 = estimates.iter().map(|e| math::dist_sq(e, truth)).sum();
    math::sqrt(sum / estimates.len() as f64)
}

/// `G_i(z, w)` for explicit arguments.
pub fn smooth_value(z: &NodeVector, w: &Directions, distances: &[f64], range: f64) -> f64 {
    let hz = apply_h(z);
    0.5 * hz.norm_sq() - apply_d(w, distances, range).dot(&hz)
}

/// `∇_z G_i = HᵀH z - HᵀD w`.
pub fn smooth_grad_z(z: &NodeVector, w: &Directions, distances: &[f64], range: f64) -> NodeVector {
    let mut g = apply_h(z);
    g.axpy(-1.0, &apply_d(w, distances, range));
    apply_h_transpose(&g)
}

/// `∇_w G_i = -D H z`.
pub fn smooth_grad_w(z: &NodeVector, distances: &[f64], range: f64) -> Directions {
    let mut g = apply_d(&apply_h(z), distances, range);
    g.scale(-1.0);
    g
}

/// The unit directions minimising `G_i(z, ·)` over the balls: each block of
/// `H z` normalised (left at zero where the block vanishes).
pub fn optimal_directions(z: &NodeVector) -> Directions {
    let mut w = apply_h(z);
    let dim = z.layout().dim;
    for block in w.as_mut_slice().chunks_mut(dim) {
        let nrm = math::norm(block);
        if nrm > 0.0 {
            block.iter_mut().for_each(|a| *a /= nrm);
        }
    }
    w
}

/// Stacks positions `x` and a common target `y` into consensus-feasible
/// per-node vectors: every copy equals the value it copies.
pub fn consensus_vectors(graph: &Graph, dim: usize, x: &[Vec<f64>], y: &[f64]) -> Vec<NodeVector> {
    (0..graph.num_nodes())
        .map(|i| {
            let mut z = NodeVector::zeros(Layout::new(dim, graph.degree(i)));
            z.x_mut().copy_from_slice(&x[i]);
            z.y_mut().copy_from_slice(y);
            for (k, &j) in graph.neighbors(i).iter().enumerate() {
                z.p_minus_mut(k).copy_from_slice(&x[i]);
                z.p_plus_mut(k).copy_from_slice(&x[j]);
                z.q_minus_mut(k).copy_from_slice(y);
                z.q_plus_mut(k).copy_from_slice(y);
            }
            z
        })
        .collect()
}

/// `½ Σ_i [Σ_{j∈N_i} (‖x_i - x_j‖ - d_ij)² + (‖x_i - y‖ - r_i)²]`.
pub fn original_objective(scenario: &Scenario, x: &[Vec<f64>], y: &[f64]) -> f64 {
    let graph = scenario.graph();
    let mut total = 0.0;
    for i in 0..graph.num_nodes() {
        for (&j, d) in graph.neighbors(i).iter().zip(scenario.neighbor_distances(i)) {
            let e = math::dist(&x[i], &x[j]) - d;
            total += e * e;
        }
        let e = math::dist(&x[i], y) - scenario.target_range(i);
        total += e * e;
    }
    0.5 * total
}

fn check_lengths(a: &[NodeState], b: &[NodeState]) -> Result<(), DiagnosticsError> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(DiagnosticsError::LengthMismatch)
    }
}

/// `Σ_i ‖∇_z G_i + A_iᵀ λ_i‖²`.
pub fn stationarity_s(states: &[NodeState]) -> f64 {
    states
        .iter()
        .map(|s| {
            let mut g = s.grad_z();
            g.axpy(1.0, &apply_a_transpose(&s.lambda));
            g.norm_sq()
        })
        .sum()
}

/// `Σ_i ‖w_i - w_i'‖²`.
pub fn update_gap_w(states: &[NodeState], prev: &[NodeState]) -> Result<f64, DiagnosticsError> {
    check_lengths(states, prev)?;
    Ok(states
        .iter()
        .zip(prev)
        .map(|(s, p)| s.w.sub(&p.w).norm_sq())
        .sum())
}

/// `Σ_i ‖A_i z_i‖²`.
pub fn feasibility_p(states: &[NodeState]) -> f64 {
    states.iter().map(|s| apply_a(&s.z).norm_sq()).sum()
}

/// Optimality gap: distance from `z` to the projected gradient step, plus
/// the consensus residual and the change of `w`.
pub fn optimality_gap_g(
    states: &[NodeState],
    prev: &[NodeState],
    graph: &Graph,
    anchor_positions: &BTreeMap<NodeId, Vec<f64>>,
) -> Result<f64, DiagnosticsError> {
    let displaced: Vec<NodeVector> = states
        .iter()
        .map(|s| {
            let mut step = s.grad_z();
            step.axpy(1.0, &apply_a_transpose(&s.lambda));
            let mut d = s.z.clone();
            d.axpy(-1.0, &step);
            d
        })
        .collect();
    let projected = project_xy(&displaced, graph, anchor_positions);
    let gap: f64 = states
        .iter()
        .zip(&projected)
        .map(|(s, p)| s.z.sub(p).norm_sq())
        .sum();
    Ok(gap + feasibility_p(states) + update_gap_w(states, prev)?)
}

/// Norms of the ε-solution residuals between consecutive iterates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub eta1: f64,
    pub eta2: f64,
    /// `max_i ‖A_i z_i‖`
    pub feasibility: f64,
}

pub fn kkt_residuals(
    states: &[NodeState],
    prev: &[NodeState],
    c: f64,
    rho: f64,
) -> Result<KktResiduals, DiagnosticsError> {
    check_lengths(states, prev)?;
    let mut eta1 = 0.0;
    let mut w_gap = 0.0;
    let mut feasibility: f64 = 0.0;
    for (s, p) in states.iter().zip(prev) {
        let dw = s.w.sub(&p.w);
        let dl = s.lambda.sub(&p.lambda);
        let dz = s.z.sub(&p.z);
        let mut e = apply_h_transpose(&apply_d(&dw, &s.distances, s.range));
        e.scale(-1.0);
        e.axpy(1.0, &apply_a_transpose(&dl));
        e.axpy(1.0, &apply_cbtb(&dz, c));
        eta1 += e.norm_sq();
        w_gap += dw.norm_sq();
        feasibility = feasibility.max(math::sqrt(apply_a(&s.z).norm_sq()));
    }
    Ok(KktResiduals {
        eta1: math::sqrt(eta1),
        eta2: rho * math::sqrt(w_gap),
        feasibility,
    })
}

/// `Σ_i [G_i + ⟨λ_i, A_i z_i⟩ + (c/2)‖A_i z_i‖²]` for feasible `w`.
pub fn augmented_lagrangian(states: &[NodeState], c: f64) -> f64 {
    states
        .iter()
        .map(|s| {
            let az = apply_a(&s.z);
            s.smooth_value() + s.lambda.dot(&az) + 0.5 * c * az.norm_sq()
        })
        .sum()
}

/// Lyapunov-type potential evaluated on two consecutive iterates.
pub fn potential(
    states: &[NodeState],
    prev: &[NodeState],
    c: f64,
    rho: f64,
    kappa1: f64,
    kappa2: f64,
) -> Result<f64, DiagnosticsError> {
    check_lengths(states, prev)?;
    let mut total = 0.0;
    for (s, p) in states.iter().zip(prev) {
        if s.w.max_block_norm() > 1.0 + FEASIBILITY_SLACK {
            return Err(DiagnosticsError::InfeasibleW(s.id));
        }
        let dz = s.z.sub(&p.z);
        let bz = apply_cbtb(&dz, c).dot(&dz) / c;
        total += 0.5
            * c
            * (kappa1 * apply_a(&s.z).norm_sq()
                + kappa2 * apply_a(&p.z).norm_sq()
                + rho / (2.0 * c) * s.w.sub(&p.w).norm_sq()
                + (kappa1 + kappa2) * bz);
    }
    Ok(total + augmented_lagrangian(states, c))
}

/// Which supplied parameters clear their thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdCheck {
    pub kappa1: bool,
    pub kappa2: bool,
    pub rho: bool,
}

impl ThresholdCheck {
    pub fn all(&self) -> bool {
        self.kappa1 && self.kappa2 && self.rho
    }
}

/// Sufficient parameter thresholds for the potential to decrease monotonically.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub c: f64,
    pub n_max: usize,
    pub n_sum: usize,
    pub d_max: f64,
    pub tau_tilde_min: f64,
    pub kappa1_min: f64,
    pub kappa2_min: f64,
    pub rho_min: f64,
    /// Present when a `ρ` was supplied.
    pub satisfied: Option<ThresholdCheck>,
}

fn tau_tilde(c: f64, degree: usize) -> f64 {
    let n = degree as f64;
    5.0 * (c + 1.0) * (c + 1.0) * n * n + (3.0 * c * c + 4.0 * c + 3.0) * n
}

/// Evaluates the thresholds on `scenario`.
///
/// `kappa2_min` is computed from the supplied `kappa1` (or `kappa1_min`), and
/// `rho_min` from the supplied weights (or the minimal ones).
pub fn parameter_thresholds(
    scenario: &Scenario,
    c: f64,
    kappa1: Option<f64>,
    kappa2: Option<f64>,
    rho: Option<f64>,
) -> ThresholdReport {
    let graph = scenario.graph();
    let n_max = graph.max_degree();
    let n_sum = graph.degree_sum();
    let n = scenario.dimension() as f64;
    let d_max = scenario.max_measurement();
    let tau_tilde_min = (0..graph.num_nodes())
        .map(|i| tau_tilde(c, graph.degree(i)))
        .fold(f64::INFINITY, f64::min);
    let kappa1_min = 6.0 * (2.0 * n_max as f64 + 2.0) * (1.0 + 1.0 / c);
    let k1 = kappa1.unwrap_or(kappa1_min);
    let kappa2_min = 3.0 * n_sum as f64 * n * (c + 1.0) * (c + 1.0) * (2.0 * n_max as f64 + 1.0) * k1
        / tau_tilde_min;
    let k2 = kappa2.unwrap_or(kappa2_min);
    let rho_min = 4.0 * d_max * d_max * (k1 + k2);
    let satisfied = rho.map(|r| ThresholdCheck {
        kappa1: k1 >= kappa1_min,
        kappa2: k2 >= kappa2_min,
        rho: r >= rho_min,
    });
    ThresholdReport {
        c,
        n_max,
        n_sum,
        d_max,
        tau_tilde_min,
        kappa1_min,
        kappa2_min,
        rho_min,
        satisfied,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::exact_scenario;
    use alloc::vec;

    #[test]
    fn rmse_sensor_hand_value() {
        let est = vec![vec![0.3, 0.4], vec![1.0, 1.0], vec![9.0, 9.0]];
        let truth = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]];
        let r = rmse_sensor(&est, &truth, &[false, false, true]).unwrap();
        assert!((r - (0.125f64).sqrt()).abs() < 1e-15);
        let swapped = vec![est[1].clone(), est[0].clone(), est[2].clone()];
        let truth_sw = vec![truth[1].clone(), truth[0].clone(), truth[2].clone()];
        assert_eq!(rmse_sensor(&swapped, &truth_sw, &[false, false, true]).unwrap(), r);
        assert_eq!(rmse_sensor(&truth, &truth, &[false, false, true]).unwrap(), 0.0);
        assert_eq!(
            rmse_sensor(&est, &truth, &[true, true, true]),
            Err(DiagnosticsError::AllAnchors)
        );
    }

    #[test]
    fn rmse_target_hand_value() {
        let y = [0.0, 0.0];
        let est = vec![vec![3.0, 4.0], vec![0.0, 0.0]];
        assert!((rmse_target(&est, &y) - (12.5f64).sqrt()).abs() < 1e-15);
        assert_eq!(rmse_target(&[vec![0.0, 0.0]], &y), 0.0);
    }

    #[test]
    fn objective_one_edge() {
        // two nodes one apart, measured 2 apart; target ranges exact
        let s = exact_scenario(&[vec![0.0, 0.0], vec![1.0, 0.0]], &[0.0, 1.0], &[0], &[(0, 1)])
            .unwrap();
        let x = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        assert_eq!(original_objective(&s, &x, &[0.0, 1.0]), 0.0);
        let x2 = vec![vec![0.0, 0.0], vec![3.0, 0.0]];
        // edge error 2 counted from both ends; node 1 target error sqrt(10) - sqrt(2)
        let t = (10.0f64).sqrt() - (2.0f64).sqrt();
        let expected = 0.5 * (4.0 + 4.0 + t * t);
        assert!((original_objective(&s, &x2, &[0.0, 1.0]) - expected).abs() < 1e-14);
    }

    #[test]
    fn kappa1_threshold_hand_value() {
        // N_max = 4 via a star with 4 leaves
        let pos: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ];
        let s = exact_scenario(&pos, &[0.5, 0.5], &[1], &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let rep = parameter_thresholds(&s, 0.11, None, None, Some(0.11));
        assert_eq!(rep.n_max, 4);
        assert_eq!(rep.n_sum, 8);
        assert!((rep.kappa1_min - 605.4545454545455).abs() < 1e-9);
        // leaves have degree 1
        assert!((rep.tau_tilde_min - tau_tilde(0.11, 1)).abs() < 1e-15);
        assert!(!rep.satisfied.unwrap().rho);
        let big = parameter_thresholds(&s, 1e12, None, None, None);
        assert!((big.kappa1_min - 60.0).abs() < 1e-9);
        assert!(big.satisfied.is_none());
    }
}
