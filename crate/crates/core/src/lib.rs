//! Random walks among random conductances on finite lattice domains.
//!
//! The walk jumps across nearest-neighbour bonds of `Z^d` at rates given by
//! i.i.d. conductances whose lower tail is `log P(ω ≤ ε) = -D ε^{-η}`. The
//! crate provides exact simulation of the walk killed on leaving a domain
//! `B`, the pathwise change of measure between environments, the rate
//! functions of the annealed local-time large deviations, the variational
//! constant `L_η(B)`, the Dirichlet spectrum of `-Δ^ω` on `B`, and the
//! experiments that check the asymptotics at desk scale.

pub mod domain;
pub mod error;
pub mod experiments;
pub mod field;
pub mod path_measure;
pub mod quadrature;
pub mod rates;
pub mod spectral;
pub mod stats;
pub mod tail_law;
pub mod variational;
pub mod walk;

pub use domain::{box_domain, build_domain, edge_set, Domain, Edge, EdgeKind, Endpoint};
pub use error::{Error, Result};
pub use field::{log_prior_density, optimal_profile, sample_field, scale_field, ConductanceField};
pub use rates::{dv_rate_i, env_rate_h, joint_rate_j, k_const, ProbabilityProfile};
pub use stats::Estimate;
pub use tail_law::TailLaw;
