//! Hermite-spectral / finite-volume solver for the one-dimensional
//! Vlasov-Fokker-Planck equation in the diffusive scaling, with the
//! drift-diffusion limit scheme and hypocoercivity diagnostics.

pub mod checkpoint;
pub mod diagnostics;
pub mod elliptic;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod hermite;
pub mod kinetic;
pub mod limit;
mod linalg;
pub mod mesh;
pub mod operators;

pub use diagnostics::{DiagnosticsCollector, DiagnosticsRecord, EntropyContext, EntropyParams, LimitReference};
pub use elliptic::{EllipticSolution, EllipticSolver};
pub use equilibrium::{EquilibriumField, FieldForm, PotentialSpec};
pub use error::{Result, VfpError};
pub use hermite::{
    project_initial, reconstruct_f, CoefficientField, DensityProfile, GaussHermite, InitialDataSpec, InitialKind,
    VelocityProjector,
};
pub use kinetic::{Closure, GlobalSystem, LinearSolver, SchemeConfig, TauLaw};
pub use limit::{stationary_state, LimitState, LimitStepper};
pub use mesh::Mesh;
pub use operators::{discrete_poincare, OperatorKind, PoincareReport, StencilMatrix, TransportOperators};
