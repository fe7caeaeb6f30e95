//! Rate functions of the local-time large deviations.
//!
//! For a profile `g` on `B` (extended by zero outside) and a conductance
//! profile `φ` on `E_B`:
//!
//! ```text
//! I_φ(g²) = Σ_{E_B} φ_xy |g(x) - g(y)|²            walk in a fixed environment
//! H(φ)    = D Σ_{E_B} φ_xy^{-η}                      cost of the environment
//! J(g²)   = K_{η,D} Σ_{E_B} |g(y) - g(x)|^{2η/(η+1)} joint rate
//! K_{η,D} = (1 + 1/η) (Dη)^{1/(η+1)}
//! ```
//!
//! with `J(g²) = inf_φ [I_φ(g²) + H(φ)]`, attained at the optimal profile
//! built by [`crate::field::optimal_profile`].

use std::sync::Arc;

use serde::Serialize;

use crate::domain::{Domain, Endpoint};
use crate::error::{Error, Result};
use crate::field::{optimal_profile, ConductanceField};
use crate::tail_law::TailLaw;

/// Tolerance on `‖g‖₂ = 1`.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// A nonnegative unit vector `g` on the sites of a domain; `g²` is a
/// probability measure on `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityProfile {
    domain: Arc<Domain>,
    values: Vec<f64>,
}

impl ProbabilityProfile {
    /// Validates `g ≥ 0` and `‖g‖₂ = 1` within [`NORM_TOLERANCE`].
    pub fn new(domain: Arc<Domain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::InvalidProfile(format!(
                "{} values for {} sites",
                values.len(),
                domain.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidProfile(format!("entry {v} is negative or not finite")));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidProfile(format!("norm {norm} differs from 1")));
        }
        Ok(ProbabilityProfile { domain, values })
    }

    /// Takes absolute values and rescales to unit norm.
    pub fn normalized(domain: Arc<Domain>, values: &[f64]) -> Result<Self> {
        let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        let norm = abs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidProfile("cannot normalise a zero or non-finite vector".into()));
        }
        let values = abs.iter().map(|v| v / norm).collect();
        ProbabilityProfile::new(domain, values)
    }

    /// The normalised square root of a probability vector on `B`.
    pub fn from_measure(domain: Arc<Domain>, mass: &[f64]) -> Result<Self> {
        if let Some(m) = mass.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::InvalidProfile(format!("mass {m} is negative or not finite")));
        }
        let roots: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
        ProbabilityProfile::normalized(domain, &roots)
    }

    /// `g ≡ |B|^{-1/2}`.
    pub fn uniform(domain: Arc<Domain>) -> Self {
        let n = domain.len();
        let v = 1.0 / (n as f64).sqrt();
        ProbabilityProfile { domain, values: vec![v; n] }
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `g(x)` for a domain site or zero for an exterior point.
    pub fn at(&self, e: &Endpoint) -> f64 {
        match e {
            Endpoint::Site(i) => self.values[*i],
            Endpoint::Exterior(_) => 0.0,
        }
    }

    /// The measure `g²`.
    pub fn measure(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * v).collect()
    }

    /// `|g(y) - g(x)|` for every edge of `E_B`, in canonical order.
    pub fn edge_differences(&self) -> Vec<f64> {
        self.domain
            .edges()
            .iter()
            .map(|e| (self.at(&e.b) - self.at(&e.a)).abs())
            .collect()
    }
}

pub(crate) fn same_domain(a: &Arc<Domain>, b: &Arc<Domain>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Donsker–Varadhan rate `I_φ(g²) = Σ φ_xy |g(x) - g(y)|²`.
pub fn dv_rate_i(phi: &ConductanceField, g: &ProbabilityProfile) -> Result<f64> {
    if !same_domain(phi.domain(), g.domain()) {
        return Err(Error::DomainMismatch);
    }
    Ok(phi
        .weights()
        .iter()
        .zip(g.edge_differences())
        .map(|(w, diff)| w * diff * diff)
        .sum())
}

/// Environment rate `H(φ) = D Σ φ_xy^{-η}`.
pub fn env_rate_h(phi: &ConductanceField, law: &TailLaw) -> f64 {
    law.dcoef() * phi.weights().iter().map(|w| w.powf(-law.eta())).sum::<f64>()
}

/// `K_{η,D} = (1 + 1/η)(Dη)^{1/(η+1)}`.
pub fn k_const(law: &TailLaw) -> f64 {
    let eta = law.eta();
    (1.0 + 1.0 / eta) * (law.dcoef() * eta).powf(1.0 / (eta + 1.0))
}

/// Exponent `2η/(η+1)` of the edge differences in `J`.
pub fn difference_exponent(eta: f64) -> f64 {
    2.0 * eta / (eta + 1.0)
}

/// `Σ_{E_B} |g(y) - g(x)|^{2η/(η+1)}`, the joint rate without its prefactor.
pub fn difference_sum(g: &ProbabilityProfile, eta: f64) -> f64 {
    let p = difference_exponent(eta);
    g.edge_differences().iter().map(|d| d.powf(p)).sum()
}

/// Joint rate `J(g²) = K_{η,D} Σ |g(y) - g(x)|^{2η/(η+1)}`.
pub fn joint_rate_j(g: &ProbabilityProfile, law: &TailLaw) -> f64 {
    k_const(law) * difference_sum(g, law.eta())
}

/// Outcome of [`check_infimum_identity`].
#[derive(Debug, Clone, Serialize)]
pub struct InfimumReport {
    pub j: f64,
    /// `min_φ [I_φ + H(φ) - J]` over the supplied fields; negative means a violation.
    pub min_gap: f64,
    /// Largest amount by which a sampled field undercuts `J` (zero if none).
    pub max_violation: f64,
    pub samples: usize,
    /// `I + H - J` at the optimal profile, capped edges excluded.
    pub optimal_gap: f64,
    pub capped_edges: usize,
    /// `D M^{-η}` per capped edge: what the cap adds to `H`.
    pub cap_contribution: f64,
    pub cap: f64,
}

/// Checks `J(g²) ≤ I_φ(g²) + H(φ)` for sampled fields and equality at the
/// optimal profile on its non-capped edges.
pub fn check_infimum_identity(
    g: &ProbabilityProfile,
    law: &TailLaw,
    phi_samples: &[ConductanceField],
    cap: f64,
) -> Result<InfimumReport> {
    let j = joint_rate_j(g, law);
    let mut min_gap = f64::INFINITY;
    for phi in phi_samples {
        let gap = dv_rate_i(phi, g)? + env_rate_h(phi, law) - j;
        min_gap = min_gap.min(gap);
    }

    let opt = optimal_profile(g, law, cap)?;
    let diffs = g.edge_differences();
    let p = difference_exponent(law.eta());
    let (mut i_opt, mut h_opt, mut capped) = (0.0, 0.0, 0usize);
    for (w, d) in opt.weights().iter().zip(&diffs) {
        if *d > 0.0 {
            i_opt += w * d * d;
            h_opt += law.dcoef() * w.powf(-law.eta());
        } else {
            capped += 1;
        }
    }
    let j_uncapped = k_const(law) * diffs.iter().filter(|d| **d > 0.0).map(|d| d.powf(p)).sum::<f64>();
    let cap_contribution = capped as f64 * law.dcoef() * cap.powf(-law.eta());
    Ok(InfimumReport {
        j,
        min_gap,
        max_violation: (-min_gap).max(0.0),
        samples: phi_samples.len(),
        optimal_gap: i_opt + h_opt - j_uncapped,
        capped_edges: capped,
        cap_contribution,
        cap,
    })
}
