//! Simulation and optimization toolkit for broadband Lambda-type optical
//! quantum memory: Maxwell-Bloch storage dynamics, the protocol-independent
//! efficiency bound, Gaussian control-field optimization, shape-based (SVD)
//! optimization, protocol classification, and parameter sweeps.

pub mod bound;
pub mod error;
pub mod fields;
pub mod numerics;
pub mod optimizer;
pub mod protocols;
pub mod shapeopt;
pub mod solver;
pub mod sweep;

pub use error::{Error, Result};
pub use fields::{ControlParams, MemoryParams};
pub use numerics::{ChebGrid, TimeGrid};
pub use solver::{EnergyLedger, FieldState, GridOptions, SolverResult};
