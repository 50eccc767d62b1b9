//! Brute-force reference implementations for tests.
//!
//! Nothing here is fast. Matrices are formed explicitly from their block
//! patterns, constrained problems are solved through their full KKT systems,
//! and the centralized solver works on the whole network at once.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::diagnostics::original_objective;
use crate::math;
use crate::model::{Graph, NodeId, Scenario};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleError {
    SingularSystem,
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("KKT system is singular")
    }
}

impl std::error::Error for OracleError {}

/// Explicit per-node matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNodeMatrices {
    pub h: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub cbtb: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

fn put_identity(m: &mut DMatrix<f64>, row_block: usize, col_block: usize, n: usize, sign: f64) {
    for a in 0..n {
        m[(row_block * n + a, col_block * n + a)] = sign;
    }
}

/// Column-block indices in the per-node vector.
struct Cols {
    deg: usize,
}

impl Cols {
    fn x(&self) -> usize {
        0
    }
    fn p_minus(&self, k: usize) -> usize {
        1 + k
    }
    fn p_plus(&self, k: usize) -> usize {
        1 + self.deg + k
    }
    fn y(&self) -> usize {
        1 + 2 * self.deg
    }
    fn q_minus(&self, k: usize) -> usize {
        2 + 2 * self.deg + k
    }
    fn q_plus(&self, k: usize) -> usize {
        2 + 3 * self.deg + k
    }
}

/// Forms the dense per-node matrices for a node of the given degree.
pub fn build_dense(degree: usize, dim: usize, c: f64, d: &[f64], r: f64) -> DenseNodeMatrices {
    assert_eq!(d.len(), degree);
    let n = dim;
    let cols = Cols { deg: degree };
    let zl = (4 * degree + 2) * n;

    let mut h = DMatrix::zeros((degree + 1) * n, zl);
    for k in 0..degree {
        put_identity(&mut h, k, cols.x(), n, 1.0);
        put_identity(&mut h, k, cols.p_plus(k), n, -1.0);
    }
    put_identity(&mut h, degree, cols.x(), n, 1.0);
    put_identity(&mut h, degree, cols.y(), n, -1.0);

    let mut a = DMatrix::zeros(3 * degree * n, zl);
    for k in 0..degree {
        put_identity(&mut a, k, cols.x(), n, 1.0);
        put_identity(&mut a, k, cols.p_minus(k), n, -1.0);
        put_identity(&mut a, degree + k, cols.y(), n, 1.0);
        put_identity(&mut a, degree + k, cols.q_minus(k), n, -1.0);
        put_identity(&mut a, 2 * degree + k, cols.y(), n, 1.0);
        put_identity(&mut a, 2 * degree + k, cols.q_plus(k), n, -1.0);
    }

    let hth = h.transpose() * &h;
    let ata = a.transpose() * &a;
    let cbtb = ata.abs() * c + hth.abs();
    let u = &hth + &ata * c + &cbtb;

    let mut dm = DMatrix::zeros((degree + 1) * n, (degree + 1) * n);
    for (k, &dk) in d.iter().enumerate() {
        put_identity(&mut dm, k, k, n, dk);
    }
    put_identity(&mut dm, degree, degree, n, r);

    DenseNodeMatrices {
        h,
        a,
        cbtb,
        u,
        d: dm,
    }
}

/// Minimises `Σ_i ½(z_i - z̃_i)ᵀ U_i (z_i - z̃_i)` subject to anchors pinned
/// and `p⁻_{i,j} = p⁺_{j,i}`, `q⁻_{i,j} = q⁺_{j,i}` on every edge, by solving
/// the KKT system directly.
pub fn solve_z_subproblem_dense(
    z_tilde: &[DVector<f64>],
    u: &[DMatrix<f64>],
    graph: &Graph,
    anchors: &BTreeMap<NodeId, Vec<f64>>,
    dim: usize,
) -> Result<Vec<DVector<f64>>, OracleError> {
    let n = dim;
    let mut offsets = Vec::with_capacity(graph.num_nodes() + 1);
    let mut total = 0;
    for zt in z_tilde {
        offsets.push(total);
        total += zt.len();
    }
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for (&i, a) in anchors {
        for (k, &ak) in a.iter().enumerate() {
            rows.push((vec![(offsets[i] + k, 1.0)], ak));
        }
    }
    for i in 0..graph.num_nodes() {
        let ci = Cols { deg: graph.degree(i) };
        for (k, &j) in graph.neighbors(i).iter().enumerate() {
            let s = graph.slot_of(j, i).expect("symmetric adjacency");
            let cj = Cols { deg: graph.degree(j) };
            for a in 0..n {
                rows.push((
                    vec![
                        (offsets[i] + ci.p_minus(k) * n + a, 1.0),
                        (offsets[j] + cj.p_plus(s) * n + a, -1.0),
                    ],
                    0.0,
                ));
                rows.push((
                    vec![
                        (offsets[i] + ci.q_minus(k) * n + a, 1.0),
                        (offsets[j] + cj.q_plus(s) * n + a, -1.0),
                    ],
                    0.0,
                ));
            }
        }
    }
    let m = rows.len();
    let mut kkt = DMatrix::zeros(total + m, total + m);
    let mut rhs = DVector::zeros(total + m);
    for (i, (zt, ui)) in z_tilde.iter().zip(u).enumerate() {
        let o = offsets[i];
        kkt.view_mut((o, o), ui.shape()).copy_from(ui);
        rhs.rows_mut(o, zt.len()).copy_from(&(ui * zt));
    }
    for (r, (entries, b)) in rows.iter().enumerate() {
        for &(col, v) in entries {
            kkt[(total + r, col)] = v;
            kkt[(col, total + r)] = v;
        }
        rhs[total + r] = *b;
    }
    let sol = kkt.lu().solve(&rhs).ok_or(OracleError::SingularSystem)?;
    if !sol.iter().all(|v| v.is_finite()) {
        return Err(OracleError::SingularSystem);
    }
    Ok(z_tilde
        .iter()
        .enumerate()
        .map(|(i, zt)| sol.rows(offsets[i], zt.len()).into_owned())
        .collect())
}

/// Value of the smooth reformulation with directions held fixed.
fn split_objective(
    scenario: &Scenario,
    x: &[Vec<f64>],
    y: &[f64],
    v: &BTreeMap<(NodeId, NodeId), Vec<f64>>,
    u: &[Vec<f64>],
) -> f64 {
    let g = scenario.graph();
    let mut total = 0.0;
    for i in 0..g.num_nodes() {
        for &j in g.neighbors(i) {
            let d = scenario.distance(i, j).unwrap_or(0.0);
            let vij = &v[&(i, j)];
            total += (0..x[i].len())
                .map(|a| {
                    let e = x[i][a] - x[j][a] - d * vij[a];
                    e * e
                })
                .sum::<f64>();
        }
        let r = scenario.target_range(i);
        total += (0..y.len())
            .map(|a| {
                let e = x[i][a] - y[a] - r * u[i][a];
                e * e
            })
            .sum::<f64>();
    }
    0.5 * total
}

fn unit(a: &[f64], b: &[f64]) -> Vec<f64> {
    let diff: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
    let nrm = math::norm(&diff);
    if nrm > 0.0 {
        diff.iter().map(|v| v / nrm).collect()
    } else {
        vec![0.0; diff.len()]
    }
}

/// Centralized alternating minimisation of the smooth reformulation from the
/// given starting point: exact directions, then a backtracking gradient step
/// on all free positions and the target. Anchors stay fixed.
pub fn centralized_solve(
    scenario: &Scenario,
    mut x: Vec<Vec<f64>>,
    mut y: Vec<f64>,
    iters: usize,
    step: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let g = scenario.graph();
    let dim = scenario.dimension();
    for (&i, a) in scenario.anchor_positions() {
        x[i] = a.clone();
    }
    for _ in 0..iters {
        let mut v = BTreeMap::new();
        for i in 0..g.num_nodes() {
            for &j in g.neighbors(i) {
                v.insert((i, j), unit(&x[i], &x[j]));
            }
        }
        let u: Vec<Vec<f64>> = (0..g.num_nodes()).map(|i| unit(&x[i], &y)).collect();

        let mut gx = vec![vec![0.0; dim]; g.num_nodes()];
        let mut gy = vec![0.0; dim];
        for i in 0..g.num_nodes() {
            for &j in g.neighbors(i) {
                let d = scenario.distance(i, j).unwrap_or(0.0);
                for a in 0..dim {
                    let e = x[i][a] - x[j][a] - d * v[&(i, j)][a];
                    gx[i][a] += e;
                    gx[j][a] -= e;
                }
            }
            let r = scenario.target_range(i);
            for a in 0..dim {
                let e = x[i][a] - y[a] - r * u[i][a];
                gx[i][a] += e;
                gy[a] -= e;
            }
        }
        for &a in g.anchors() {
            gx[a].iter_mut().for_each(|v| *v = 0.0);
        }
        let grad_sq: f64 = gx.iter().map(|gi| math::norm_sq(gi)).sum::<f64>() + math::norm_sq(&gy);
        if grad_sq == 0.0 {
            break;
        }
        let f0 = split_objective(scenario, &x, &y, &v, &u);
        let mut t = step;
        loop {
            let xn: Vec<Vec<f64>> = x
                .iter()
                .zip(&gx)
                .map(|(xi, gi)| xi.iter().zip(gi).map(|(p, q)| p - t * q).collect())
                .collect();
            let yn: Vec<f64> = y.iter().zip(&gy).map(|(p, q)| p - t * q).collect();
            if split_objective(scenario, &xn, &yn, &v, &u) <= f0 - 0.5 * t * grad_sq || t < 1e-12 {
                x = xn;
                y = yn;
                break;
            }
            t *= 0.5;
        }
    }
    (x, y)
}

/// The original objective at the centralized solution, for convenience.
pub fn centralized_objective(scenario: &Scenario, x: &[Vec<f64>], y: &[f64]) -> f64 {
    original_objective(scenario, x, y)
}

/// Central differences `(f(p + h e_k) - f(p - h e_k)) / 2h` per coordinate.
pub fn finite_diff_grad<F: Fn(&[f64]) -> f64>(f: F, point: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0);
    let mut p = point.to_vec();
    (0..point.len())
        .map(|k| {
            let orig = p[k];
            p[k] = orig + h;
            let up = f(&p);
            p[k] = orig - h;
            let down = f(&p);
            p[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::exact_scenario;

    #[test]
    fn dense_a_pattern_for_unit_sizes() {
        let m = build_dense(1, 1, 1.0, &[1.0], 1.0);
        let expected = DMatrix::from_row_slice(
            3,
            6,
            &[
                1., -1., 0., 0., 0., 0., //
                0., 0., 0., 1., -1., 0., //
                0., 0., 0., 1., 0., -1.,
            ],
        );
        assert_eq!(m.a, expected);
    }

    #[test]
    fn dense_u_is_diagonal_with_known_entries() {
        let c = 0.3;
        let m = build_dense(1, 1, c, &[1.0], 1.0);
        let diag = [2.0 * (c + 2.0), 2.0 * c, 2.0, 2.0 * (2.0 * c + 1.0), 2.0 * c, 2.0 * c];
        for (r, &d) in diag.iter().enumerate() {
            for col in 0..6 {
                let want = if r == col { d } else { 0.0 };
                assert!((m.u[(r, col)] - want).abs() < 1e-12, "U[{r},{col}]");
            }
        }
        let hth = m.h.transpose() * &m.h;
        assert_eq!(hth, hth.transpose());
        assert_eq!(m.cbtb, m.cbtb.transpose());
    }

    #[test]
    fn finite_differences_of_simple_functions() {
        let g = finite_diff_grad(|p| 0.5 * (p[0] * p[0] + p[1] * p[1]), &[1.0, 2.0], 1e-5);
        assert!((g[0] - 1.0).abs() < 1e-8 && (g[1] - 2.0).abs() < 1e-8);
        let g = finite_diff_grad(|p| 3.0 * p[0] - p[1], &[0.3, -0.1], 1e-3);
        assert!((g[0] - 3.0).abs() < 1e-10 && (g[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn centralized_solve_recovers_small_exact_network() {
        let pos = vec![
            vec![0.4, 0.5],
            vec![0.6, 0.2],
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ];
        let edges = [(0, 1), (0, 2), (0, 4), (1, 2), (1, 3), (0, 3)];
        let s = exact_scenario(&pos, &[0.7, 0.8], &[2, 3, 4], &edges).unwrap();
        let x0 = vec![vec![0.5, 0.5]; 5];
        let (x, y) = centralized_solve(&s, x0.clone(), vec![0.5, 0.5], 3000, 0.5);
        for (a, b) in x.iter().zip(&pos) {
            assert!(math::dist(a, b) < 1e-3, "{a:?} vs {b:?}");
        }
        assert!(math::dist(&y, &[0.7, 0.8]) < 1e-3);
        assert!(centralized_objective(&s, &x, &y) <= centralized_objective(&s, &x0, &[0.5, 0.5]));
        assert_eq!(x[2], pos[2]);
    }
}
