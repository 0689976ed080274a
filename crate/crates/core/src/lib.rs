//! Beam-pattern synthesis on 2-D fluid-antenna port grids.
//!
//! The crate turns a desired far-field pattern over an `(azimuth, elevation)`
//! grid into port activations and weights:
//!
//! - [`geometry`]: port lattice and angular grid.
//! - [`beam`]: desired-beam construction and vector/matrix layout.
//! - [`steering`]: steering dictionary (dense or factored) and beam synthesis.
//! - [`fourier`]: closed-form Fourier weights, 2-D DFT and phase retrieval.
//! - [`selection`]: greedy spacing-constrained port selection.
//! - [`evaluation`]: metrics, cross-sections and CSV exporters.
//! - [`config`] and [`pipeline`]: the fixed / fixed+retrieval / fluid+retrieval
//!   schemes and their result bundles.

pub mod beam;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod fourier;
pub mod geometry;
pub mod pipeline;
pub mod selection;
pub mod steering;

pub use beam::{desired_beam, BeamPattern, PhaseRamp, TargetRegion};
pub use config::{RunConfig, Scheme};
pub use error::{BeamError, Result};
pub use fourier::{phase_retrieve, weights_from_beam, ApertureBlock, RetrievalOptions};
pub use geometry::{AngularGrid, PortGrid, Position};
pub use selection::{select_ports, ResidualUpdate, SelectOptions, Selection};
pub use steering::{steering_entry, SteeringDictionary, StorageKind, VMode};
