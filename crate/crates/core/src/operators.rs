//! Matrix-free block operators on per-node vectors.
//!
//! A node with `N` neighbours in `n` dimensions owns a primal vector of
//! `4N + 2` position-sized blocks laid out as
//! `[x, p⁻_1..p⁻_N, p⁺_1..p⁺_N, y, q⁻_1..q⁻_N, q⁺_1..q⁺_N]`:
//! its own position, the copies of that position it keeps for each neighbour,
//! its copies of each neighbour's position, its target estimate, and the two
//! families of target-estimate copies. Every operator below is a Kronecker
//! product with `I_n`, so it acts on whole `n`-blocks.
//!
//! Rows of the operators split into a *sensor* family (`x - p⁺_j` in `H`,
//! `x - p⁻_j` in `A`) and a *target* family (`x - y` in `H`, `y - q⁻_j` and
//! `y - q⁺_j` in `A`). A [`BlockSet`] selects which families are present;
//! blocks of an absent family are never read and are written as zero.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::math;
use crate::model::{Graph, NodeId};

/// Which row families of the joint problem are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockSet {
    /// Sensor and target blocks together.
    Joint,
    /// Cooperative localization only: `y`, `q`, `u`, `λ²`, `λ³` are excluded.
    SensorOnly,
    /// Target localization with every sensor anchored: `p`, `v`, `λ¹` are excluded.
    TargetOnly,
}

impl BlockSet {
    pub fn sensor(self) -> bool {
        !matches!(self, BlockSet::TargetOnly)
    }

    pub fn target(self) -> bool {
        !matches!(self, BlockSet::SensorOnly)
    }
}

/// Shape of one node's local vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Layout {
    pub dim: usize,
    pub degree: usize,
    pub blocks: BlockSet,
}

impl Layout {
    pub fn new(dim: usize, degree: usize) -> Self {
        Layout {
            dim,
            degree,
            blocks: BlockSet::Joint,
        }
    }

    pub fn with_blocks(self, blocks: BlockSet) -> Self {
        Layout { blocks, ..self }
    }

    /// `(4N + 2) n`
    pub fn z_len(&self) -> usize {
        (4 * self.degree + 2) * self.dim
    }

    /// `(N + 1) n`
    pub fn w_len(&self) -> usize {
        (self.degree + 1) * self.dim
    }

    /// `3 N n`
    pub fn lambda_len(&self) -> usize {
        3 * self.degree * self.dim
    }

    fn block(&self, index: usize) -> Range<usize> {
        index * self.dim..(index + 1) * self.dim
    }

    pub fn x_range(&self) -> Range<usize> {
        self.block(0)
    }

    pub fn p_minus_range(&self, k: usize) -> Range<usize> {
        debug_assert!(k < self.degree);
        self.block(1 + k)
    }

    pub fn p_plus_range(&self, k: usize) -> Range<usize> {
        debug_assert!(k < self.degree);
        self.block(1 + self.degree + k)
    }

    pub fn y_range(&self) -> Range<usize> {
        self.block(1 + 2 * self.degree)
    }

    pub fn q_minus_range(&self, k: usize) -> Range<usize> {
        debug_assert!(k < self.degree);
        self.block(2 + 2 * self.degree + k)
    }

    pub fn q_plus_range(&self, k: usize) -> Range<usize> {
        debug_assert!(k < self.degree);
        self.block(2 + 3 * self.degree + k)
    }
}

macro_rules! block_storage {
    ($name:ident, $len:ident) => {
        impl $name {
            pub fn zeros(layout: Layout) -> Self {
                $name {
                    layout,
                    data: vec![0.0; layout.$len()],
                }
            }

            /// Panics if `data` does not have the length implied by `layout`.
            pub fn from_vec(layout: Layout, data: Vec<f64>) -> Self {
                assert_eq!(data.len(), layout.$len(), "length does not match layout");
                $name { layout, data }
            }

            pub fn layout(&self) -> Layout {
                self.layout
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.data
            }

            pub fn as_mut_slice(&mut self) -> &mut [f64] {
                &mut self.data
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.data
            }

            pub fn dot(&self, other: &Self) -> f64 {
                math::dot(&self.data, &other.data)
            }

            pub fn norm_sq(&self) -> f64 {
                math::norm_sq(&self.data)
            }

            /// `self += alpha * other`
            pub fn axpy(&mut self, alpha: f64, other: &Self) {
                debug_assert_eq!(self.data.len(), other.data.len());
                for (a, b) in self.data.iter_mut().zip(&other.data) {
                    *a += alpha * b;
                }
            }

            /// `self - other`
            pub fn sub(&self, other: &Self) -> Self {
                let mut out = self.clone();
                out.axpy(-1.0, other);
                out
            }

            pub fn scale(&mut self, alpha: f64) {
                self.data.iter_mut().for_each(|a| *a *= alpha);
            }

            fn blk(&self, r: Range<usize>) -> &[f64] {
                &self.data[r]
            }

            fn blk_mut(&mut self, r: Range<usize>) -> &mut [f64] {
                &mut self.data[r]
            }
        }
    };
}

/// Per-node primal vector `z_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVector {
    layout: Layout,
    data: Vec<f64>,
}

block_storage!(NodeVector, z_len);

impl NodeVector {
    pub fn x(&self) -> &[f64] {
        self.blk(self.layout.x_range())
    }
    pub fn x_mut(&mut self) -> &mut [f64] {
        self.blk_mut(self.layout.x_range())
    }
    pub fn p_minus(&self, k: usize) -> &[f64] {
        self.blk(self.layout.p_minus_range(k))
    }
    pub fn p_minus_mut(&mut self, k: usize) -> &mut [f64] {
        self.blk_mut(self.layout.p_minus_range(k))
    }
    pub fn p_plus(&self, k: usize) -> &[f64] {
        self.blk(self.layout.p_plus_range(k))
    }
    pub fn p_plus_mut(&mut self, k: usize) -> &mut [f64] {
        self.blk_mut(self.layout.p_plus_range(k))
    }
    pub fn y(&self) -> &[f64] {
        self.blk(self.layout.y_range())
    }
    pub fn y_mut(&mut self) -> &mut [f64] {
        self.blk_mut(self.layout.y_range())
    }
    pub fn q_minus(&self, k: usize) -> &[f64] {
        self.blk(self.layout.q_minus_range(k))
    }
    pub fn q_minus_mut(&mut self, k: usize) -> &mut [f64] {
        self.blk_mut(self.layout.q_minus_range(k))
    }
    pub fn q_plus(&self, k: usize) -> &[f64] {
        self.blk(self.layout.q_plus_range(k))
    }
    pub fn q_plus_mut(&mut self, k: usize) -> &mut [f64] {
        self.blk_mut(self.layout.q_plus_range(k))
    }
}

/// `N + 1` stacked blocks: one per neighbour, then one for the target.
///
/// Used both for the outputs of `H` and `D` and for the auxiliary unit
/// directions `w_i = [v_1..v_N, u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeBlocks {
    layout: Layout,
    data: Vec<f64>,
}

block_storage!(EdgeBlocks, w_len);

impl EdgeBlocks {
    pub fn neighbor(&self, k: usize) -> &[f64] {
        debug_assert!(k < self.layout.degree);
        self.blk(self.layout.block(k))
    }
    pub fn neighbor_mut(&mut self, k: usize) -> &mut [f64] {
        debug_assert!(k < self.layout.degree);
        let r = self.layout.block(k);
        self.blk_mut(r)
    }
    pub fn target(&self) -> &[f64] {
        self.blk(self.layout.block(self.layout.degree))
    }
    pub fn target_mut(&mut self) -> &mut [f64] {
        let r = self.layout.block(self.layout.degree);
        self.blk_mut(r)
    }
    /// Block `k` for `k` in `0..=N`.
    pub fn block(&self, k: usize) -> &[f64] {
        self.blk(self.layout.block(k))
    }
    pub fn num_blocks(&self) -> usize {
        self.layout.degree + 1
    }
    /// Largest Euclidean norm over the blocks.
    pub fn max_block_norm(&self) -> f64 {
        (0..self.num_blocks())
            .map(|k| math::norm(self.block(k)))
            .fold(0.0, f64::max)
    }
}

/// Auxiliary unit-ball directions `w_i = [v_1..v_N, u]`.
pub type Directions = EdgeBlocks;

/// `3N` stacked blocks in the row order of `A_i`: consensus on the own
/// position (`λ¹`), own target copies (`λ²`), neighbour target copies (`λ³`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBlocks {
    layout: Layout,
    data: Vec<f64>,
}

block_storage!(ConstraintBlocks, lambda_len);

impl ConstraintBlocks {
    pub fn position(&self, k: usize) -> &[f64] {
        self.blk(self.layout.block(k))
    }
    pub fn position_mut(&mut self, k: usize) -> &mut [f64] {
        let r = self.layout.block(k);
        self.blk_mut(r)
    }
    pub fn own_target(&self, k: usize) -> &[f64] {
        self.blk(self.layout.block(self.layout.degree + k))
    }
    pub fn own_target_mut(&mut self, k: usize) -> &mut [f64] {
        let r = self.layout.block(self.layout.degree + k);
        self.blk_mut(r)
    }
    pub fn neighbor_target(&self, k: usize) -> &[f64] {
        self.blk(self.layout.block(2 * self.layout.degree + k))
    }
    pub fn neighbor_target_mut(&mut self, k: usize) -> &mut [f64] {
        let r = self.layout.block(2 * self.layout.degree + k);
        self.blk_mut(r)
    }
}

/// Lagrange multipliers `λ_i`.
pub type Multipliers = ConstraintBlocks;

#[inline]
fn set_diff(out: &mut [f64], a: &[f64], b: &[f64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = x - y;
    }
}

#[inline]
fn add_into(out: &mut [f64], a: &[f64]) {
    for (o, x) in out.iter_mut().zip(a) {
        *o += x;
    }
}

#[inline]
fn add_scaled(out: &mut [f64], alpha: f64, a: &[f64]) {
    for (o, x) in out.iter_mut().zip(a) {
        *o += alpha * x;
    }
}

#[inline]
fn set_neg(out: &mut [f64], a: &[f64]) {
    for (o, x) in out.iter_mut().zip(a) {
        *o = -x;
    }
}

/// `H_i z`: block `k` is `x - p⁺_k`, the last block is `x - y`.
pub fn apply_h(z: &NodeVector) -> EdgeBlocks {
    let l = z.layout();
    let mut out = EdgeBlocks::zeros(l);
    if l.blocks.sensor() {
        for k in 0..l.degree {
            set_diff(out.neighbor_mut(k), z.x(), z.p_plus(k));
        }
    }
    if l.blocks.target() {
        set_diff(out.target_mut(), z.x(), z.y());
    }
    out
}

/// `H_iᵀ g`
pub fn apply_h_transpose(g: &EdgeBlocks) -> NodeVector {
    let l = g.layout();
    let mut out = NodeVector::zeros(l);
    if l.blocks.sensor() {
        for k in 0..l.degree {
            add_into(out.x_mut(), g.neighbor(k));
            set_neg(out.p_plus_mut(k), g.neighbor(k));
        }
    }
    if l.blocks.target() {
        add_into(out.x_mut(), g.target());
        set_neg(out.y_mut(), g.target());
    }
    out
}

/// `A_i z`: `[x - p⁻_k]`, `[y - q⁻_k]`, `[y - q⁺_k]`.
pub fn apply_a(z: &NodeVector) -> ConstraintBlocks {
    let l = z.layout();
    let mut out = ConstraintBlocks::zeros(l);
    for k in 0..l.degree {
        if l.blocks.sensor() {
            set_diff(out.position_mut(k), z.x(), z.p_minus(k));
        }
        if l.blocks.target() {
            set_diff(out.own_target_mut(k), z.y(), z.q_minus(k));
            set_diff(out.neighbor_target_mut(k), z.y(), z.q_plus(k));
        }
    }
    out
}

/// `A_iᵀ λ`
pub fn apply_a_transpose(lambda: &ConstraintBlocks) -> NodeVector {
    let l = lambda.layout();
    let mut out = NodeVector::zeros(l);
    for k in 0..l.degree {
        if l.blocks.sensor() {
            add_into(out.x_mut(), lambda.position(k));
            set_neg(out.p_minus_mut(k), lambda.position(k));
        }
        if l.blocks.target() {
            add_into(out.y_mut(), lambda.own_target(k));
            add_into(out.y_mut(), lambda.neighbor_target(k));
            set_neg(out.q_minus_mut(k), lambda.own_target(k));
            set_neg(out.q_plus_mut(k), lambda.neighbor_target(k));
        }
    }
    out
}

/// `D_i w`: scales neighbour block `k` by `distances[k]` and the target block
/// by `range`. `D_i` is diagonal, hence self-adjoint.
pub fn apply_d(w: &EdgeBlocks, distances: &[f64], range: f64) -> EdgeBlocks {
    let l = w.layout();
    debug_assert_eq!(distances.len(), l.degree);
    let mut out = EdgeBlocks::zeros(l);
    if l.blocks.sensor() {
        for (k, &d) in distances.iter().enumerate() {
            add_scaled(out.neighbor_mut(k), d, w.neighbor(k));
        }
    }
    if l.blocks.target() {
        add_scaled(out.target_mut(), range, w.target());
    }
    out
}

/// `c B_iᵀ B_i z`, where `c B_iᵀ B_i = c|A_iᵀ A_i| + |H_iᵀ H_i|` (entrywise
/// absolute values).
pub fn apply_cbtb(z: &NodeVector, c: f64) -> NodeVector {
    let l = z.layout();
    let n_i = l.degree as f64;
    let mut out = NodeVector::zeros(l);
    let dim = l.dim;
    for a in 0..dim {
        let x = z.x()[a];
        let mut xo = 0.0;
        if l.blocks.sensor() {
            xo += (c + 1.0) * n_i * x;
            for k in 0..l.degree {
                let pm = z.p_minus(k)[a];
                let pp = z.p_plus(k)[a];
                xo += c * pm + pp;
                out.p_minus_mut(k)[a] = c * x + c * pm;
                out.p_plus_mut(k)[a] = x + pp;
            }
        }
        if l.blocks.target() {
            let y = z.y()[a];
            xo += x + y;
            let mut yo = x + (2.0 * c * n_i + 1.0) * y;
            for k in 0..l.degree {
                let qm = z.q_minus(k)[a];
                let qp = z.q_plus(k)[a];
                yo += c * qm + c * qp;
                out.q_minus_mut(k)[a] = c * y + c * qm;
                out.q_plus_mut(k)[a] = c * y + c * qp;
            }
            out.y_mut()[a] = yo;
        }
        out.x_mut()[a] = xo;
    }
    out
}

/// Diagonal of `U_i = H_iᵀH_i + cA_iᵀA_i + cB_iᵀB_i`, one value per block kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UDiagonal {
    pub x: f64,
    pub p_minus: f64,
    pub p_plus: f64,
    pub y: f64,
    pub q_minus: f64,
    pub q_plus: f64,
}

impl UDiagonal {
    /// Excluded block kinds get a unit entry so that `U⁻¹` stays defined on them.
    pub fn new(layout: Layout, c: f64) -> Self {
        let n_i = layout.degree as f64;
        let (s, t) = (layout.blocks.sensor(), layout.blocks.target());
        let mut x = 0.0;
        if s {
            x += (c + 1.0) * n_i;
        }
        if t {
            x += 1.0;
        }
        let pick = |on: bool, v: f64| if on { v } else { 1.0 };
        UDiagonal {
            x: if x > 0.0 { 2.0 * x } else { 1.0 },
            p_minus: pick(s, 2.0 * c),
            p_plus: pick(s, 2.0),
            y: pick(t, 2.0 * (2.0 * c * n_i + 1.0)),
            q_minus: pick(t, 2.0 * c),
            q_plus: pick(t, 2.0 * c),
        }
    }
}

fn scale_blocks(z: &NodeVector, u: &UDiagonal, invert: bool) -> NodeVector {
    let l = z.layout();
    let mut out = z.clone();
    let f = |v: f64| if invert { 1.0 / v } else { v };
    out.x_mut().iter_mut().for_each(|a| *a *= f(u.x));
    for k in 0..l.degree {
        out.p_minus_mut(k).iter_mut().for_each(|a| *a *= f(u.p_minus));
        out.p_plus_mut(k).iter_mut().for_each(|a| *a *= f(u.p_plus));
        out.q_minus_mut(k).iter_mut().for_each(|a| *a *= f(u.q_minus));
        out.q_plus_mut(k).iter_mut().for_each(|a| *a *= f(u.q_plus));
    }
    out.y_mut().iter_mut().for_each(|a| *a *= f(u.y));
    out
}

/// `U_i z`
pub fn apply_u(z: &NodeVector, c: f64) -> NodeVector {
    scale_blocks(z, &UDiagonal::new(z.layout(), c), false)
}

/// `U_i⁻¹ z`
pub fn apply_u_inverse(z: &NodeVector, c: f64) -> NodeVector {
    scale_blocks(z, &UDiagonal::new(z.layout(), c), true)
}

/// Projects every `n`-block onto the closed unit ball: `b / max(1, ‖b‖)`.
pub fn project_unit_balls(w: &EdgeBlocks) -> EdgeBlocks {
    let mut out = w.clone();
    let dim = w.layout().dim;
    for block in out.as_mut_slice().chunks_mut(dim) {
        let nrm = math::norm(block);
        if nrm > 1.0 {
            block.iter_mut().for_each(|a| *a /= nrm);
        }
    }
    out
}

/// Euclidean projection of the stacked per-node vectors onto `X ∩ Y`.
///
/// `X` pins the own-position block of every anchor to its known position.
/// `Y` ties every edge's pair of copies together: `p⁻_{i,j} = p⁺_{j,i}` and
/// `q⁻_{i,j} = q⁺_{j,i}`. The constraint groups are disjoint, so the
/// projection replaces each pair by its mean and anchors by their position.
pub fn project_xy(
    z: &[NodeVector],
    graph: &Graph,
    anchor_positions: &BTreeMap<NodeId, Vec<f64>>,
) -> Vec<NodeVector> {
    let mut out: Vec<NodeVector> = z.to_vec();
    for (i, zi) in z.iter().enumerate() {
        let l = zi.layout();
        if let Some(a) = anchor_positions.get(&i) {
            out[i].x_mut().copy_from_slice(a);
        }
        for (k, &j) in graph.neighbors(i).iter().enumerate() {
            let s = graph.reverse_slot(i, k);
            let zj = &z[j];
            for a in 0..l.dim {
                if l.blocks.sensor() {
                    out[i].p_minus_mut(k)[a] = 0.5 * (zi.p_minus(k)[a] + zj.p_plus(s)[a]);
                    out[i].p_plus_mut(k)[a] = 0.5 * (zi.p_plus(k)[a] + zj.p_minus(s)[a]);
                }
                if l.blocks.target() {
                    out[i].q_minus_mut(k)[a] = 0.5 * (zi.q_minus(k)[a] + zj.q_plus(s)[a]);
                    out[i].q_plus_mut(k)[a] = 0.5 * (zi.q_plus(k)[a] + zj.q_minus(s)[a]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nv(l: Layout, data: &[f64]) -> NodeVector {
        NodeVector::from_vec(l, data.to_vec())
    }

    #[test]
    fn h_substitution() {
        // n=2, N=1: z = [x, p⁻, p⁺, y, q⁻, q⁺]
        let l = Layout::new(2, 1);
        let z = nv(l, &[1., 0., 9., 9., 0., 0., 0., 1., 9., 9., 9., 9.]);
        assert_eq!(apply_h(&z).as_slice(), &[1., 0., 1., -1.]);
    }

    #[test]
    fn h_vanishes_on_copies() {
        let l = Layout::new(2, 3);
        let mut z = NodeVector::zeros(l);
        z.x_mut().copy_from_slice(&[0.3, -0.7]);
        z.y_mut().copy_from_slice(&[0.3, -0.7]);
        for k in 0..3 {
            z.p_plus_mut(k).copy_from_slice(&[0.3, -0.7]);
            z.q_minus_mut(k).copy_from_slice(&[5.0, 1.0]);
        }
        assert!(apply_h(&z).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn h_transpose_substitution() {
        let l = Layout::new(2, 1);
        let g = EdgeBlocks::from_vec(l, vec![1., 0., 0., 1.]);
        let z = apply_h_transpose(&g);
        assert_eq!(z.x(), &[1., 1.]);
        assert_eq!(z.p_plus(0), &[-1., 0.]);
        assert_eq!(z.y(), &[0., -1.]);
        assert_eq!(z.p_minus(0), &[0., 0.]);
        assert_eq!(z.q_minus(0), &[0., 0.]);
        assert_eq!(z.q_plus(0), &[0., 0.]);
        assert!(apply_h_transpose(&EdgeBlocks::zeros(l)).norm_sq() == 0.0);
    }

    #[test]
    fn a_substitution() {
        let l = Layout::new(2, 1);
        // x=(1,0) p⁻=(0,0) p⁺=(7,7) y=(2,2) q⁻=(1,1) q⁺=(0,0)
        let z = nv(l, &[1., 0., 0., 0., 7., 7., 2., 2., 1., 1., 0., 0.]);
        assert_eq!(apply_a(&z).as_slice(), &[1., 0., 1., 1., 2., 2.]);
    }

    #[test]
    fn a_vanishes_on_feasible_point() {
        let l = Layout::new(3, 2);
        let mut z = NodeVector::zeros(l);
        z.x_mut().copy_from_slice(&[1., 2., 3.]);
        z.y_mut().copy_from_slice(&[-1., 0.5, 4.]);
        for k in 0..2 {
            z.p_minus_mut(k).copy_from_slice(&[1., 2., 3.]);
            z.q_minus_mut(k).copy_from_slice(&[-1., 0.5, 4.]);
            z.q_plus_mut(k).copy_from_slice(&[-1., 0.5, 4.]);
            z.p_plus_mut(k).copy_from_slice(&[8., 8., 8.]);
        }
        assert_eq!(apply_a(&z).norm_sq(), 0.0);
    }

    #[test]
    fn a_transpose_substitution() {
        let l = Layout::new(2, 1);
        let lam = ConstraintBlocks::from_vec(l, vec![1., 0., 0., 2., 3., 0.]);
        let z = apply_a_transpose(&lam);
        assert_eq!(z.x(), &[1., 0.]);
        assert_eq!(z.p_minus(0), &[-1., 0.]);
        assert_eq!(z.y(), &[3., 2.]);
        assert_eq!(z.q_minus(0), &[0., -2.]);
        assert_eq!(z.q_plus(0), &[-3., 0.]);
        assert_eq!(z.p_plus(0), &[0., 0.]);
    }

    #[test]
    fn d_scaling() {
        let l = Layout::new(2, 1);
        let w = EdgeBlocks::from_vec(l, vec![1., 0., 0., 1.]);
        assert_eq!(apply_d(&w, &[2.0], 3.0).as_slice(), &[2., 0., 0., 3.]);
        let l3 = Layout::new(2, 3);
        let w = EdgeBlocks::from_vec(l3, (0..8).map(f64::from).collect());
        assert_eq!(apply_d(&w, &[1.0; 3], 1.0), w);
    }

    #[test]
    fn u_divisors() {
        // c = 0.5, N = 2: x 8, p⁻ 1, p⁺ 2, y 6, q⁻ 1, q⁺ 1
        let u = UDiagonal::new(Layout::new(2, 2), 0.5);
        assert_eq!(
            u,
            UDiagonal {
                x: 8.0,
                p_minus: 1.0,
                p_plus: 2.0,
                y: 6.0,
                q_minus: 1.0,
                q_plus: 1.0
            }
        );
    }

    #[test]
    fn unit_ball_projection() {
        let l = Layout::new(2, 1);
        let w = EdgeBlocks::from_vec(l, vec![3., 4., 0.3, 0.4]);
        let p = project_unit_balls(&w);
        assert!((p.as_slice()[0] - 0.6).abs() < 1e-15);
        assert!((p.as_slice()[1] - 0.8).abs() < 1e-15);
        assert_eq!(&p.as_slice()[2..], &[0.3, 0.4]);
    }

    #[test]
    fn sensor_only_ignores_target_blocks() {
        let l = Layout::new(2, 2).with_blocks(BlockSet::SensorOnly);
        let mut z = NodeVector::zeros(l);
        z.x_mut().copy_from_slice(&[1., 2.]);
        z.y_mut().copy_from_slice(&[5., 5.]);
        z.q_plus_mut(1).copy_from_slice(&[5., 5.]);
        let h = apply_h(&z);
        assert_eq!(h.target(), &[0., 0.]);
        let a = apply_a(&z);
        assert_eq!(a.own_target(0), &[0., 0.]);
        let b = apply_cbtb(&z, 0.3);
        assert_eq!(b.y(), &[0., 0.]);
        assert_eq!(b.x(), &[1.3 * 2.0 * 1.0, 1.3 * 2.0 * 2.0]);
        let u = UDiagonal::new(l, 0.3);
        assert!((u.x - 2.0 * 1.3 * 2.0).abs() < 1e-15);
    }

    fn layout_strategy() -> impl Strategy<Value = Layout> {
        (1usize..=3, 0usize..=4, prop_oneof![
            Just(BlockSet::Joint),
            Just(BlockSet::SensorOnly),
            Just(BlockSet::TargetOnly)
        ])
            .prop_map(|(dim, deg, b)| Layout::new(dim, deg).with_blocks(b))
    }

    fn vec_of(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, len)
    }

    fn layout_and_vectors() -> impl Strategy<Value = (Layout, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        layout_strategy().prop_flat_map(|l| {
            (
                Just(l),
                vec_of(l.z_len()),
                vec_of(l.z_len()),
                vec_of(l.w_len()),
                vec_of(l.lambda_len()),
            )
        })
    }

    proptest! {
        #[test]
        fn adjoint_identities((l, z1, _z2, g, lam) in layout_and_vectors()) {
            let z = NodeVector::from_vec(l, z1);
            let g = EdgeBlocks::from_vec(l, g);
            let lam = ConstraintBlocks::from_vec(l, lam);
            let lhs = apply_h(&z).dot(&g);
            let rhs = z.dot(&apply_h_transpose(&g));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            let lhs = apply_a(&z).dot(&lam);
            let rhs = z.dot(&apply_a_transpose(&lam));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn linear_operators_are_linear((l, z1, z2, _g, _lam) in layout_and_vectors(),
                                       alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let z1 = NodeVector::from_vec(l, z1);
            let z2 = NodeVector::from_vec(l, z2);
            let mut comb = z1.clone();
            comb.scale(alpha);
            comb.axpy(beta, &z2);
            let check = |f: &dyn Fn(&NodeVector) -> Vec<f64>| {
                let lhs = f(&comb);
                let a = f(&z1);
                let b = f(&z2);
                lhs.iter().zip(a.iter().zip(&b)).all(|(l, (x, y))| (l - (alpha * x + beta * y)).abs() < 1e-9)
            };
            prop_assert!(check(&|z| apply_h(z).into_vec()));
            prop_assert!(check(&|z| apply_a(z).into_vec()));
            prop_assert!(check(&|z| apply_cbtb(z, 0.7).into_vec()));
            prop_assert!(check(&|z| apply_u_inverse(z, 0.7).into_vec()));
        }

        #[test]
        fn cbtb_is_symmetric((l, z1, z2, _g, _lam) in layout_and_vectors(), c in 0.01f64..5.0) {
            let z1 = NodeVector::from_vec(l, z1);
            let z2 = NodeVector::from_vec(l, z2);
            let lhs = apply_cbtb(&z1, c).dot(&z2);
            let rhs = z1.dot(&apply_cbtb(&z2, c));
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }

        #[test]
        fn u_inverse_inverts((l, z1, _z2, _g, _lam) in layout_and_vectors(), c in 0.01f64..5.0) {
            let z = NodeVector::from_vec(l, z1);
            let back = apply_u_inverse(&apply_u(&z, c), c);
            for (a, b) in back.as_slice().iter().zip(z.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            let u = UDiagonal::new(l, c);
            prop_assert!(u.x > 0.0 && u.p_minus > 0.0 && u.p_plus > 0.0);
            prop_assert!(u.y > 0.0 && u.q_minus > 0.0 && u.q_plus > 0.0);
        }

        #[test]
        fn d_is_self_adjoint((l, _z1, _z2, g, _lam) in layout_and_vectors(),
                             h in vec_of(20), r in 0.0f64..3.0) {
            let d: Vec<f64> = h.iter().take(l.degree).map(|v| v.abs()).collect();
            let w = EdgeBlocks::from_vec(l, g.clone());
            let mut other = g;
            other.reverse();
            let o = EdgeBlocks::from_vec(l, other);
            let lhs = apply_d(&w, &d, r).dot(&o);
            let rhs = w.dot(&apply_d(&o, &d, r));
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }

        #[test]
        fn unit_ball_projection_is_idempotent_and_nonexpansive(
            (l, _z1, _z2, g, _lam) in layout_and_vectors(), h in vec_of(40)
        ) {
            let a = EdgeBlocks::from_vec(l, g);
            let b = EdgeBlocks::from_vec(l, h[..l.w_len()].to_vec());
            let pa = project_unit_balls(&a);
            prop_assert!(pa.max_block_norm() <= 1.0 + 1e-12);
            prop_assert!(project_unit_balls(&pa).sub(&pa).norm_sq() <= 1e-28);
            let pb = project_unit_balls(&b);
            prop_assert!(pa.sub(&pb).norm_sq() <= a.sub(&b).norm_sq() + 1e-12);
        }
    }
}
