//! Motion by curvature of planar triple-junction networks.
//!
//! The crate is organized around a small set of value types:
//!
//! - [`NetworkTopology`] / [`Network`]: an abstract regular graph together with
//!   one sampled planar curve per edge.
//! - [`minimal::StraightNetwork`]: straight-edge critical points of the length
//!   functional (Steiner-type networks) for a fixed topology.
//! - [`flow`]: a linearly implicit solver for the parametrized flow
//!   `dγ/dt = γ_xx / |γ_x|^2` with pinned endpoints, shared junction unknowns
//!   and the 120° angle condition enforced at every step.
//! - [`graphrep`]: normal/tangential graph parametrization of a network over a
//!   nearby minimal one, with tangent components adapted to normal ones.
//! - [`variations`]: first/second variation of length in the constrained space
//!   of normal fields, spectra, and gradient-inequality diagnostics.
//! - [`examples`]: the five-curve rectangle configuration whose central edge
//!   collapses, with its certified monitors and 1-D heat barriers.
//!
//! All types are immutable value objects; operations are pure functions.

pub mod cutoff;
pub mod examples;
pub mod flow;
pub mod geom;
pub mod graphrep;
pub mod interp;
pub mod io;
pub mod junction_maps;
pub mod minimal;
pub mod network;
pub mod topology;
pub mod variations;

pub use geom::Vec2;
pub use network::{build_network, geometry, length, DiscreteCurve, GeometryCache, Network};
pub use topology::{ModelError, NetworkTopology, VertexKind};
