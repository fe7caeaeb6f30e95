//! Desk-scale experiments: annealed non-exit estimators, the
//! Laplace-transform check, local-time probabilities, the path-density
//! normalisation test, and the command line that drives them.

pub mod annealed;
pub mod cli;
pub mod config;
pub mod girsanov;
pub mod ldp;

pub use annealed::{
    annealed_nonexit_is, annealed_nonexit_mc, annealed_nonexit_quadrature, tauberian_check, AnnealedEstimate, Method,
    TauberianPoint, TiltedProposal,
};
pub use cli::run_cli;
pub use config::{DomainSpec, ExperimentConfig, IsSettings, LawSpec};
pub use girsanov::{girsanov_normalization, GirsanovReport};
pub use ldp::{ldp_point_check, LdpReport, LdpRow};
