//! Communication networks and the synthetic scenarios drawn on them.
//!
//! Node ids are dense indices `0..num_nodes`. Neighbour lists are kept sorted
//! ascending; the position of `j` inside `neighbors(i)` (its *slot*) fixes the
//! block order of every per-node vector and the alignment of messages.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::math;

pub type NodeId = usize;

/// Number of re-draws attempted when a random layout comes out disconnected.
pub const MAX_CONNECT_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    NoAnchor,
    NodeOutOfRange(NodeId),
    SelfLoop(NodeId),
    DuplicateEdge(NodeId, NodeId),
    DisconnectedGraph,
    CannotConnect { attempts: usize },
    InvalidConfig(&'static str),
    DimensionMismatch { expected: usize, found: usize },
    MissingAnchorPosition(NodeId),
    NotAnAnchor(NodeId),
    MissingDistance(NodeId, NodeId),
    UnknownEdge(NodeId, NodeId),
    InvalidMeasurement(&'static str),
    RangeCountMismatch { expected: usize, found: usize },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::NoAnchor => write!(f, "network has no anchor"),
            ModelError::NodeOutOfRange(i) => write!(f, "node id {i} out of range"),
            ModelError::SelfLoop(i) => write!(f, "self-loop at node {i}"),
            ModelError::DuplicateEdge(i, j) => write!(f, "duplicate edge ({i}, {j})"),
            ModelError::DisconnectedGraph => write!(f, "graph is not connected"),
            ModelError::CannotConnect { attempts } => write!(
                f,
                "no connected layout after {attempts} attempts; communication range too small"
            ),
            ModelError::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
            ModelError::DimensionMismatch { expected, found } => {
                write!(f, "expected a {expected}-dimensional vector, found length {found}")
            }
            ModelError::MissingAnchorPosition(i) => write!(f, "anchor {i} has no position"),
            ModelError::NotAnAnchor(i) => write!(f, "node {i} has a position but is not an anchor"),
            ModelError::MissingDistance(i, j) => write!(f, "edge ({i}, {j}) has no distance"),
            ModelError::UnknownEdge(i, j) => {
                write!(f, "distance given for ({i}, {j}) which is not an edge")
            }
            ModelError::InvalidMeasurement(what) => write!(f, "invalid measurement: {what}"),
            ModelError::RangeCountMismatch { expected, found } => {
                write!(f, "expected {expected} target ranges, found {found}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ModelError {}

/// Unordered node pair, stored as `(min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(NodeId, NodeId);

impl Edge {
    pub fn new(i: NodeId, j: NodeId) -> Self {
        if i <= j {
            Edge(i, j)
        } else {
            Edge(j, i)
        }
    }

    pub fn lo(self) -> NodeId {
        self.0
    }

    pub fn hi(self) -> NodeId {
        self.1
    }
}

/// Undirected, connected communication graph with at least one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    anchors: Vec<NodeId>,
    is_anchor: Vec<bool>,
    adjacency: Vec<Vec<NodeId>>,
    // reverse_slot[i][k] is the slot of i inside neighbors(adjacency[i][k])
    reverse_slot: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(
        num_nodes: usize,
        anchor_ids: &[NodeId],
        edges: &[(NodeId, NodeId)],
    ) -> Result<Self, ModelError> {
        if anchor_ids.is_empty() {
            return Err(ModelError::NoAnchor);
        }
        let mut is_anchor = vec![false; num_nodes];
        for &a in anchor_ids {
            if a >= num_nodes {
                return Err(ModelError::NodeOutOfRange(a));
            }
            is_anchor[a] = true;
        }
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(i, j) in edges {
            if i >= num_nodes {
                return Err(ModelError::NodeOutOfRange(i));
            }
            if j >= num_nodes {
                return Err(ModelError::NodeOutOfRange(j));
            }
            if i == j {
                return Err(ModelError::SelfLoop(i));
            }
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for (i, nbrs) in adjacency.iter_mut().enumerate() {
            nbrs.sort_unstable();
            if let Some(w) = nbrs.windows(2).find(|w| w[0] == w[1]) {
                let e = Edge::new(i, w[0]);
                return Err(ModelError::DuplicateEdge(e.lo(), e.hi()));
            }
        }
        if !is_connected(&adjacency) {
            return Err(ModelError::DisconnectedGraph);
        }
        let reverse_slot = adjacency
            .iter()
            .enumerate()
            .map(|(i, nbrs)| {
                nbrs.iter()
                    .map(|&j| adjacency[j].binary_search(&i).expect("adjacency is symmetric"))
                    .collect()
            })
            .collect();
        let anchors = (0..num_nodes).filter(|&i| is_anchor[i]).collect();
        Ok(Graph {
            num_nodes,
            anchors,
            is_anchor,
            adjacency,
            reverse_slot,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Anchor ids, ascending.
    pub fn anchors(&self) -> &[NodeId] {
        &self.anchors
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_anchor(&self, i: NodeId) -> bool {
        self.is_anchor[i]
    }

    pub fn anchor_mask(&self) -> &[bool] {
        &self.is_anchor
    }

    /// Sorted neighbour list of `i`.
    pub fn neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.adjacency[i].len()
    }

    /// Slot of `i` in the neighbour list of its `k`-th neighbour.
    pub fn reverse_slot(&self, i: NodeId, k: usize) -> usize {
        self.reverse_slot[i][k]
    }

    pub fn slot_of(&self, i: NodeId, j: NodeId) -> Option<usize> {
        self.adjacency[i].binary_search(&j).ok()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Sum of all degrees, i.e. twice the number of edges.
    pub fn degree_sum(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn num_edges(&self) -> usize {
        self.degree_sum() / 2
    }

    /// Edges with `lo < hi`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, nbrs)| {
            nbrs.iter()
                .filter(move |&&j| j > i)
                .map(move |&j| Edge::new(i, j))
        })
    }
}

fn is_connected(adjacency: &[Vec<NodeId>]) -> bool {
    if adjacency.is_empty() {
        return true;
    }
    let mut seen = vec![false; adjacency.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for &j in &adjacency[i] {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == adjacency.len()
}

/// True sensor positions and target position.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub positions: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

/// A localization problem instance: the network plus its measured ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    dimension: usize,
    graph: Graph,
    anchor_positions: BTreeMap<NodeId, Vec<f64>>,
    edge_distances: BTreeMap<Edge, f64>,
    target_ranges: Vec<f64>,
    truth: Option<GroundTruth>,
}

impl Scenario {
    pub fn new(
        dimension: usize,
        graph: Graph,
        anchor_positions: BTreeMap<NodeId, Vec<f64>>,
        edge_distances: BTreeMap<Edge, f64>,
        target_ranges: Vec<f64>,
        truth: Option<GroundTruth>,
    ) -> Result<Self, ModelError> {
        if dimension == 0 {
            return Err(ModelError::InvalidConfig("dimension must be positive"));
        }
        let check_len = |v: &[f64]| {
            if v.len() != dimension {
                Err(ModelError::DimensionMismatch {
                    expected: dimension,
                    found: v.len(),
                })
            } else if v.iter().any(|x| !x.is_finite()) {
                Err(ModelError::InvalidMeasurement("non-finite coordinate"))
            } else {
                Ok(())
            }
        };
        for &a in graph.anchors() {
            let pos = anchor_positions
                .get(&a)
                .ok_or(ModelError::MissingAnchorPosition(a))?;
            check_len(pos)?;
        }
        if let Some((&i, _)) = anchor_positions.iter().find(|(&i, _)| {
            i >= graph.num_nodes() || !graph.is_anchor(i)
        }) {
            return Err(ModelError::NotAnAnchor(i));
        }
        for e in graph.edges() {
            if !edge_distances.contains_key(&e) {
                return Err(ModelError::MissingDistance(e.lo(), e.hi()));
            }
        }
        for (e, &d) in &edge_distances {
            if e.hi() >= graph.num_nodes() || graph.slot_of(e.lo(), e.hi()).is_none() {
                return Err(ModelError::UnknownEdge(e.lo(), e.hi()));
            }
            if !(d.is_finite() && d >= 0.0) {
                return Err(ModelError::InvalidMeasurement("distance must be finite and >= 0"));
            }
        }
        if target_ranges.len() != graph.num_nodes() {
            return Err(ModelError::RangeCountMismatch {
                expected: graph.num_nodes(),
                found: target_ranges.len(),
            });
        }
        if target_ranges.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(ModelError::InvalidMeasurement("target range must be finite and >= 0"));
        }
        if let Some(t) = &truth {
            if t.positions.len() != graph.num_nodes() {
                return Err(ModelError::InvalidConfig("truth must list every node"));
            }
            for p in &t.positions {
                check_len(p)?;
            }
            check_len(&t.target)?;
        }
        Ok(Scenario {
            dimension,
            graph,
            anchor_positions,
            edge_distances,
            target_ranges,
            truth,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn anchor_positions(&self) -> &BTreeMap<NodeId, Vec<f64>> {
        &self.anchor_positions
    }

    pub fn anchor_position(&self, i: NodeId) -> Option<&[f64]> {
        self.anchor_positions.get(&i).map(Vec::as_slice)
    }

    pub fn edge_distances(&self) -> &BTreeMap<Edge, f64> {
        &self.edge_distances
    }

    /// Measured distance between neighbours `i` and `j`.
    pub fn distance(&self, i: NodeId, j: NodeId) -> Option<f64> {
        self.edge_distances.get(&Edge::new(i, j)).copied()
    }

    /// Distances from `i` to its neighbours, in slot order.
    pub fn neighbor_distances(&self, i: NodeId) -> Vec<f64> {
        self.graph
            .neighbors(i)
            .iter()
            .map(|&j| self.edge_distances[&Edge::new(i, j)])
            .collect()
    }

    pub fn target_ranges(&self) -> &[f64] {
        &self.target_ranges
    }

    pub fn target_range(&self, i: NodeId) -> f64 {
        self.target_ranges[i]
    }

    pub fn truth(&self) -> Option<&GroundTruth> {
        self.truth.as_ref()
    }

    /// Largest of all inter-sensor distances and target ranges.
    pub fn max_measurement(&self) -> f64 {
        self.edge_distances
            .values()
            .chain(self.target_ranges.iter())
            .fold(0.0, |m, &d| if d > m { d } else { m })
    }

    /// Same measurements, but every node becomes an anchor at `positions[i]`.
    pub fn anchored_at(&self, positions: &[Vec<f64>]) -> Result<Scenario, ModelError> {
        if positions.len() != self.num_nodes() {
            return Err(ModelError::InvalidConfig("one position per node required"));
        }
        let all: Vec<NodeId> = (0..self.num_nodes()).collect();
        let edges: Vec<(NodeId, NodeId)> = self.graph.edges().map(|e| (e.lo(), e.hi())).collect();
        let graph = Graph::new(self.num_nodes(), &all, &edges)?;
        let anchors = positions.iter().cloned().enumerate().collect();
        Scenario::new(
            self.dimension,
            graph,
            anchors,
            self.edge_distances.clone(),
            self.target_ranges.clone(),
            self.truth.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Fixed standard deviation `sigma_add`.
    Awgn,
    /// Standard deviation `sigma_add * true_distance`.
    RangeDependent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma_add: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, sigma_add: f64) -> Result<Self, ModelError> {
        if !(sigma_add.is_finite() && sigma_add >= 0.0) {
            return Err(ModelError::InvalidConfig("sigma_add must be finite and >= 0"));
        }
        Ok(NoiseModel { kind, sigma_add })
    }

    pub fn noiseless() -> Self {
        NoiseModel {
            kind: NoiseKind::Awgn,
            sigma_add: 0.0,
        }
    }

    pub fn std_dev(&self, true_dist: f64) -> f64 {
        match self.kind {
            NoiseKind::Awgn => self.sigma_add,
            NoiseKind::RangeDependent => self.sigma_add * true_dist,
        }
    }
}

/// Noisy measurement from a standard-normal draw; negative results clamp to 0.
pub fn apply_noise(true_dist: f64, noise: &NoiseModel, standard_draw: f64) -> f64 {
    let d = true_dist + noise.std_dev(true_dist) * standard_draw;
    if d > 0.0 {
        d
    } else {
        0.0
    }
}

pub fn measure_distance<R: Rng + ?Sized>(true_dist: f64, noise: &NoiseModel, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    apply_noise(true_dist, noise, z)
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ModelError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(ModelError::InvalidConfig("region bounds must share a positive dimension"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.partial_cmp(u) != Some(core::cmp::Ordering::Less)) {
            return Err(ModelError::InvalidConfig("region lower bound must be below upper bound"));
        }
        Ok(Region { lower, upper })
    }

    pub fn unit_square() -> Self {
        Region {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        }
    }

    /// `[-0.5, 0.5]^2`.
    pub fn centered_unit_square() -> Self {
        Region {
            lower: vec![-0.5, -0.5],
            upper: vec![0.5, 0.5],
        }
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| l + (u - l) * rng.gen::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_agents: usize,
    pub num_anchors: usize,
    pub region: Region,
    pub comm_range: f64,
    pub noise: NoiseModel,
    pub seed: u64,
    pub target_position: Option<Vec<f64>>,
}

impl SyntheticConfig {
    /// 100 agents and 8 anchors in the unit square, range 0.3, `sigma_add = 0.02`.
    pub fn unit_square_100(kind: NoiseKind, seed: u64) -> Self {
        SyntheticConfig {
            num_agents: 100,
            num_anchors: 8,
            region: Region::unit_square(),
            comm_range: 0.3,
            noise: NoiseModel {
                kind,
                sigma_add: 0.02,
            },
            seed,
            target_position: None,
        }
    }

    /// 500 sensors (10 anchors) in `[-0.5, 0.5]^2`, target at the origin,
    /// range-dependent noise with `sigma_add = 0.02`.
    pub fn benchmark_like(seed: u64) -> Self {
        SyntheticConfig {
            num_agents: 490,
            num_anchors: 10,
            region: Region::centered_unit_square(),
            comm_range: BENCHMARK_LIKE_RANGE,
            noise: NoiseModel {
                kind: NoiseKind::RangeDependent,
                sigma_add: 0.02,
            },
            seed,
            target_position: Some(vec![0.0, 0.0]),
        }
    }

    pub fn dimension(&self) -> usize {
        self.region.dimension()
    }
}

/// Communication range of the `benchmark_like` preset.
pub const BENCHMARK_LIKE_RANGE: f64 = 0.15;

/// Draws a random connected network and its measurements.
///
/// Agents get ids `0..num_agents`, anchors the last `num_anchors` ids. All
/// randomness comes from a ChaCha8 stream seeded with `config.seed`, drawn in
/// a fixed order: layout (re-drawn while disconnected), then one noise sample
/// per edge in lexicographic order, then one per target range in id order.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Scenario, ModelError> {
    let dim = config.dimension();
    Region::new(config.region.lower.clone(), config.region.upper.clone())?;
    if config.num_anchors == 0 {
        return Err(ModelError::NoAnchor);
    }
    if !(config.comm_range.is_finite() && config.comm_range > 0.0) {
        return Err(ModelError::InvalidConfig("comm_range must be positive"));
    }
    if let Some(t) = &config.target_position {
        if t.len() != dim {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                found: t.len(),
            });
        }
    }
    NoiseModel::new(config.noise.kind, config.noise.sigma_add)?;

    let total = config.num_agents + config.num_anchors;
    let anchor_ids: Vec<NodeId> = (config.num_agents..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut attempt = 0;
    let (positions, target, graph) = loop {
        let positions: Vec<Vec<f64>> = (0..total).map(|_| config.region.sample(&mut rng)).collect();
        let target = match &config.target_position {
            Some(t) => t.clone(),
            None => config.region.sample(&mut rng),
        };
        let mut edges = Vec::new();
        for i in 0..total {
            for j in i + 1..total {
                if math::dist(&positions[i], &positions[j]) <= config.comm_range {
                    edges.push((i, j));
                }
            }
        }
        match Graph::new(total, &anchor_ids, &edges) {
            Ok(g) => break (positions, target, g),
            Err(ModelError::DisconnectedGraph) if attempt < MAX_CONNECT_RETRIES => attempt += 1,
            Err(ModelError::DisconnectedGraph) => {
                return Err(ModelError::CannotConnect {
                    attempts: attempt + 1,
                })
            }
            Err(e) => return Err(e),
        }
    };

    let edge_distances: BTreeMap<Edge, f64> = graph
        .edges()
        .map(|e| {
            let d = math::dist(&positions[e.lo()], &positions[e.hi()]);
            (e, measure_distance(d, &config.noise, &mut rng))
        })
        .collect();
    let target_ranges: Vec<f64> = positions
        .iter()
        .map(|p| measure_distance(math::dist(p, &target), &config.noise, &mut rng))
        .collect();
    let anchor_positions = anchor_ids
        .iter()
        .map(|&a| (a, positions[a].clone()))
        .collect();

    Scenario::new(
        dim,
        graph,
        anchor_positions,
        edge_distances,
        target_ranges,
        Some(GroundTruth { positions, target }),
    )
}

/// Builds a noiseless scenario from explicit positions and edges.
pub fn exact_scenario(
    positions: &[Vec<f64>],
    target: &[f64],
    anchor_ids: &[NodeId],
    edges: &[(NodeId, NodeId)],
) -> Result<Scenario, ModelError> {
    let dim = target.len();
    let graph = Graph::new(positions.len(), anchor_ids, edges)?;
    let edge_distances = graph
        .edges()
        .map(|e| (e, math::dist(&positions[e.lo()], &positions[e.hi()])))
        .collect();
    let target_ranges = positions.iter().map(|p| math::dist(p, target)).collect();
    let anchor_positions = anchor_ids
        .iter()
        .map(|&a| (a, positions[a].clone()))
        .collect();
    Scenario::new(
        dim,
        graph,
        anchor_positions,
        edge_distances,
        target_ranges,
        Some(GroundTruth {
            positions: positions.to_vec(),
            target: target.to_vec(),
        }),
    )
}
