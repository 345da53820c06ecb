//! Competitive bivirus SIS dynamics over hypergraphs.
//!
//! Two viruses spread over a common set of population nodes through pairwise
//! contacts (matrices `A^k`) and higher-order interactions (hyperedge matrices
//! `B_i^k`). Infection by one virus excludes the other. The crate provides the
//! vector field and its Jacobian, spectral stability tests for Metzler and
//! nonnegative matrices, equilibrium finders and sufficient-condition
//! checkers, an adaptive integrator with domain monitoring, and the scenario
//! format used by the `bivirus` CLI.

pub mod conditions;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod model;
pub mod ode;
pub mod scenario;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{
    domain_excursion, hoi_support, in_domain, jacobian, r_matrix, validate_model, vector_field,
    BivirusModel, HoiSupportIndicator, State, ValidationReport, VirusParams, Violation,
};
