use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::domain::Domain;
use crate::error::Result;
use crate::field::ConductanceField;
use crate::path_measure::girsanov_log_density;
use crate::stats::{Estimate, Running};
use crate::walk::simulate;

#[derive(Debug, Clone, Serialize)]
pub struct GirsanovReport {
    pub t: f64,
    pub paths: usize,
    /// Mean of `Φ_t` under the reference walk.
    pub mean: Estimate,
    /// `|mean - 1| / se`.
    pub z: f64,
    /// Largest `|log Φ(φ,ψ) - log Φ(φ,χ) - log Φ(χ,ψ)|` over the paths.
    pub cocycle_defect: f64,
    /// Largest `|log Φ(φ,ψ) + log Φ(ψ,φ)|` over the paths.
    pub antisymmetry_defect: f64,
}

fn uniform_field<R: Rng + ?Sized>(dom: &Arc<Domain>, lo: f64, hi: f64, rng: &mut R) -> ConductanceField {
    let w = (0..dom.num_edges()).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    ConductanceField::new(dom.clone(), w).expect("uniform weights are positive")
}

/// Checks `E^ψ[Φ_t] = 1` for `ψ ≡ 1` and `φ` uniform on `[0.5, 2]` per edge,
/// together with the pathwise cocycle and antisymmetry identities against a
/// third field of the same kind.
pub fn girsanov_normalization<R: Rng + ?Sized>(dom: &Arc<Domain>, t: f64, n: usize, rng: &mut R) -> Result<GirsanovReport> {
    let psi = ConductanceField::constant(dom.clone(), 1.0)?;
    let phi = uniform_field(dom, 0.5, 2.0, rng);
    let chi = uniform_field(dom, 0.5, 2.0, rng);
    let mut acc = Running::default();
    let (mut cocycle_defect, mut antisymmetry_defect) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let path = simulate(&psi, t, rng);
        let l = girsanov_log_density(&path, &phi, &psi)?;
        acc.push(l.exp());
        let split = girsanov_log_density(&path, &phi, &chi)? + girsanov_log_density(&path, &chi, &psi)?;
        cocycle_defect = cocycle_defect.max((l - split).abs());
        antisymmetry_defect = antisymmetry_defect.max((l + girsanov_log_density(&path, &psi, &phi)?).abs());
    }
    let mean = acc.estimate();
    Ok(GirsanovReport { t, paths: n, mean, z: mean.z_exact(1.0), cocycle_defect, antisymmetry_defect })
}
