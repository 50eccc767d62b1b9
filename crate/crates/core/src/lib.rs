//! Distributed joint localization of sensors and a passive target.
//!
//! Every sensor in a connected network measures noisy ranges to its
//! neighbours and to a single non-communicating target. A few sensors are
//! anchors with known positions. The crate implements a scaled-proximal ADMM
//! in which every node keeps local copies of its neighbours' positions and
//! target estimates, so each iteration consists of one closed-form update
//! per node plus one exchange of messages along every edge.
//!
//! Layout of the crate:
//!
//! - [`model`]: the communication graph and problem instances, plus a synthetic generator.
//! - [`operators`]: block-structured linear operators on per-node vectors,
//!   applied without ever forming the matrices, and the two projections.
//! - [`jcnl`]: the joint solver, executed in bulk-synchronous rounds.
//! - [`scnl`]: the two-stage baseline (sensors first, target second).
//! - [`diagnostics`]: error and convergence measures together with the
//!   sufficient parameter thresholds.
//! - `oracle` (feature `oracle`): dense reference implementations used by
//!   tests.
//!
//! The crate is `no_std` with `alloc`. The `parallel` feature runs the
//! per-node work of each round on rayon; results are bitwise identical to the
//! sequential path.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod diagnostics;
pub mod jcnl;
mod math;
pub mod model;
pub mod operators;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod scnl;

pub use diagnostics::{MetricsRecord, ThresholdReport};
pub use jcnl::{run_jcnl, Monitor, NoMonitor, SolveResult, SolverError, SolverParams};
pub use model::{Graph, ModelError, NoiseModel, Scenario, SyntheticConfig};
pub use operators::{BlockSet, Layout};
pub use scnl::{run_scnl, ScnlParams};
