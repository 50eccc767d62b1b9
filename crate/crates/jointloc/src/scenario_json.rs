//! Scenario files.
//!
//! ```json
//! {
//!   "dimension": 2,
//!   "nodes": [{"id": 0, "kind": "agent", "position": [0.1, 0.2]},
//!             {"id": 1, "kind": "anchor", "position": [0.0, 0.0]}],
//!   "edges": [{"i": 0, "j": 1, "distance": 0.22}],
//!   "target_ranges": [{"node": 0, "r": 0.5}, {"node": 1, "r": 0.4}],
//!   "target_true": [0.3, 0.3]
//! }
//! ```
//!
//! Anchors must carry a position. Agent positions and `target_true` are the
//! ground truth; either all of it is present or none. Floats are written in
//! shortest round-trip form, so saving and loading reproduces every value
//! exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use jointloc_core::model::{Edge, GroundTruth, NodeId};
use jointloc_core::{Graph, Scenario};
use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Anchor,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub i: NodeId,
    pub j: NodeId,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeEntry {
    pub node: NodeId,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub dimension: usize,
    pub nodes: Vec<NodeEntry>,
    pub edges: Vec<EdgeEntry>,
    pub target_ranges: Vec<RangeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_true: Option<Vec<f64>>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

impl ScenarioFile {
    pub fn from_scenario(s: &Scenario) -> Self {
        let g = s.graph();
        let truth = s.truth();
        let nodes = (0..g.num_nodes())
            .map(|i| NodeEntry {
                id: i,
                kind: if g.is_anchor(i) {
                    NodeKind::Anchor
                } else {
                    NodeKind::Agent
                },
                position: s
                    .anchor_position(i)
                    .map(<[f64]>::to_vec)
                    .or_else(|| truth.map(|t| t.positions[i].clone())),
            })
            .collect();
        let edges = g
            .edges()
            .map(|e| EdgeEntry {
                i: e.lo(),
                j: e.hi(),
                distance: s.edge_distances()[&e],
            })
            .collect();
        let target_ranges = s
            .target_ranges()
            .iter()
            .enumerate()
            .map(|(node, &r)| RangeEntry { node, r })
            .collect();
        ScenarioFile {
            dimension: s.dimension(),
            nodes,
            edges,
            target_ranges,
            target_true: truth.map(|t| t.target.clone()),
        }
    }

    pub fn into_scenario(self) -> Result<Scenario, Error> {
        let n = self.nodes.len();
        let mut by_id: Vec<Option<&NodeEntry>> = vec![None; n];
        for node in &self.nodes {
            let slot = by_id
                .get_mut(node.id)
                .ok_or_else(|| invalid(format!("node ids must be 0..{n}; found {}", node.id)))?;
            if slot.replace(node).is_some() {
                return Err(invalid(format!("node {} listed twice", node.id)));
            }
        }
        let nodes: Vec<&NodeEntry> = by_id.into_iter().map(|n| n.expect("ids are dense")).collect();

        let anchor_ids: Vec<NodeId> = nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Anchor)
            .map(|n| n.id)
            .collect();
        let mut anchor_positions = BTreeMap::new();
        for node in nodes.iter().filter(|n| n.kind == NodeKind::Anchor) {
            let p = node
                .position
                .clone()
                .ok_or_else(|| invalid(format!("anchor {} has no position", node.id)))?;
            anchor_positions.insert(node.id, p);
        }

        let pairs: Vec<(NodeId, NodeId)> = self.edges.iter().map(|e| (e.i, e.j)).collect();
        let graph = Graph::new(n, &anchor_ids, &pairs)?;
        let edge_distances: BTreeMap<Edge, f64> = self
            .edges
            .iter()
            .map(|e| (Edge::new(e.i, e.j), e.distance))
            .collect();

        let mut ranges = vec![None; n];
        for entry in &self.target_ranges {
            let slot = ranges
                .get_mut(entry.node)
                .ok_or_else(|| invalid(format!("target range for unknown node {}", entry.node)))?;
            if slot.replace(entry.r).is_some() {
                return Err(invalid(format!("node {} has two target ranges", entry.node)));
            }
        }
        let target_ranges = ranges
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| invalid(format!("node {i} has no target range"))))
            .collect::<Result<Vec<f64>, Error>>()?;

        let agents_positioned = nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Agent)
            .map(|n| n.position.is_some())
            .collect::<Vec<_>>();
        let all_agents = agents_positioned.iter().all(|&b| b);
        let no_agents = !agents_positioned.iter().any(|&b| b);
        let truth = match (&self.target_true, all_agents, no_agents) {
            (Some(target), true, _) => Some(GroundTruth {
                positions: nodes
                    .iter()
                    .map(|n| n.position.clone().expect("checked above"))
                    .collect(),
                target: target.clone(),
            }),
            (None, _, true) => None,
            _ => {
                return Err(invalid(
                    "ground truth must give every agent position and target_true, or none of them",
                ))
            }
        };

        Ok(Scenario::new(
            self.dimension,
            graph,
            anchor_positions,
            edge_distances,
            target_ranges,
            truth,
        )?)
    }
}

/// Parses a scenario from JSON text.
pub fn parse_scenario(text: &str) -> Result<Scenario, Error> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    file.into_scenario()
}

pub fn scenario_to_json(s: &Scenario) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from_scenario(s))
        .expect("scenario serialization cannot fail")
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, Error> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

pub fn save_scenario(path: impl AsRef<Path>, s: &Scenario) -> Result<(), Error> {
    let path = path.as_ref();
    fs::write(path, scenario_to_json(s) + "\n").map_err(|e| Error::io(path, e))
}
