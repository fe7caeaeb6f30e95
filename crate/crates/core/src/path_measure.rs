//! Change of measure between walks in two conductance environments.
//!
//! For paths observed up to `T = min(t, exit time)`, the law of the walk in
//! environment `φ` has density with respect to the walk in `ψ`
//!
//! ```text
//! Φ_T = Π_i (φ/ψ)(X_{τ_{i-1}}, X_{τ_i}) e^{-(τ_i - τ_{i-1})(φ̄ - ψ̄)(X_{τ_{i-1}})}
//!       · e^{-(T - τ_S)(φ̄ - ψ̄)(X_T)}
//! ```
//!
//! where the product runs over all jumps up to `T`. When the path exits, the
//! last factor is the jump across the boundary edge and there is no trailing
//! holding term. Everything is accumulated in log space.

use rand::Rng;
use serde::Serialize;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::ConductanceField;
use crate::rates::same_domain;
use crate::spectral;
use crate::stats::{Estimate, Running};
use crate::walk::{local_times, simulate, PathRecord};

fn check_pair(phi: &ConductanceField, psi: &ConductanceField) -> Result<()> {
    if !same_domain(phi.domain(), psi.domain()) {
        return Err(Error::FieldMismatch);
    }
    Ok(())
}

/// `log Φ_T` of the path: density of the `φ`-walk against the `ψ`-walk.
pub fn girsanov_log_density(p: &PathRecord, phi: &ConductanceField, psi: &ConductanceField) -> Result<f64> {
    check_pair(phi, psi)?;
    let dom = phi.domain();
    let excess = |site: usize| phi.total_at(site) - psi.total_at(site);
    let mut log_phi = 0.0;
    let mut prev_time = 0.0;
    for (k, &jump) in p.jump_times.iter().enumerate() {
        let e = p.edges[k];
        log_phi += (phi.weight(e) / psi.weight(e)).ln() - (jump - prev_time) * excess(p.sites[k]);
        prev_time = jump;
    }
    let last = p.last_site();
    debug_assert!(last < dom.len());
    match &p.exit {
        Some(exit) => {
            log_phi += (phi.weight(exit.edge) / psi.weight(exit.edge)).ln()
                - (exit.time - prev_time) * excess(last);
        }
        None => log_phi -= (p.horizon - prev_time) * excess(last),
    }
    Ok(log_phi)
}

/// Estimates `P^φ(F)` as the `ψ`-sample mean of `Φ_T 1_F`.
pub fn reweighted_probability<F, R>(
    event: F,
    phi: &ConductanceField,
    psi: &ConductanceField,
    t: f64,
    n: usize,
    rng: &mut R,
) -> Result<Estimate>
where
    F: Fn(&PathRecord) -> bool,
    R: Rng + ?Sized,
{
    check_pair(phi, psi)?;
    let mut acc = Running::default();
    for _ in 0..n {
        let path = simulate(psi, t, rng);
        let w = if event(&path) { girsanov_log_density(&path, phi, psi)?.exp() } else { 0.0 };
        acc.push(w);
    }
    Ok(acc.estimate())
}

/// Plain Monte Carlo estimate of `P^φ(F)`.
pub fn direct_probability<F, R>(event: F, phi: &ConductanceField, t: f64, n: usize, rng: &mut R) -> Estimate
where
    F: Fn(&PathRecord) -> bool,
    R: Rng + ?Sized,
{
    let hits = (0..n).filter(|_| event(&simulate(phi, t, rng))).count();
    Estimate::binomial(hits, n)
}

/// Both sides of `P^φ(F) ≥ e^{-4dεt} P^{ψ-ε}(F)`.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub eps: f64,
    pub t: f64,
    pub factor: f64,
    pub lhs: Estimate,
    /// `P^{ψ-ε}(F)` before multiplication by `factor`.
    pub shifted: Estimate,
    /// `lhs - factor · shifted`.
    pub margin: f64,
    /// Margin in joint standard errors (exact routes give `±inf` or 0).
    pub z: f64,
    pub violated: bool,
}

fn comparison_setup(
    psi: &ConductanceField,
    phi: &ConductanceField,
    eps: f64,
) -> Result<ConductanceField> {
    check_pair(phi, psi)?;
    let min_weight = psi.min_weight();
    if !(eps > 0.0 && eps < min_weight) {
        return Err(Error::EpsilonTooLarge { eps, min_weight });
    }
    for (k, (a, b)) in phi.weights().iter().zip(psi.weights()).enumerate() {
        if (a - b).abs() > eps * (1.0 + 1e-12) {
            return Err(Error::InvalidField(format!(
                "edge {k}: weight {a} outside the band {b} ± {eps}"
            )));
        }
    }
    psi.map(|_, w| w - eps)
}

fn comparison_report(eps: f64, t: f64, dim: usize, lhs: Estimate, shifted: Estimate) -> ComparisonReport {
    let factor = (-4.0 * dim as f64 * eps * t).exp();
    let margin = lhs.value - factor * shifted.value;
    let joint = (lhs.se * lhs.se + factor * factor * shifted.se * shifted.se).sqrt();
    let z = if joint > 0.0 {
        margin / joint
    } else if margin >= 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    let violated = if joint > 0.0 { z < -3.0 } else { margin < -1e-12 };
    ComparisonReport { eps, t, factor, lhs, shifted, margin, z, violated }
}

/// Monte Carlo route: both probabilities estimated by simulation.
#[allow(clippy::too_many_arguments)]
pub fn comparison_bound_check<F, R>(
    psi: &ConductanceField,
    phi: &ConductanceField,
    eps: f64,
    event: F,
    t: f64,
    n: usize,
    rng: &mut R,
) -> Result<ComparisonReport>
where
    F: Fn(&PathRecord) -> bool,
    R: Rng + ?Sized,
{
    let lowered = comparison_setup(psi, phi, eps)?;
    let lhs = direct_probability(&event, phi, t, n, rng);
    let shifted = direct_probability(&event, &lowered, t, n, rng);
    Ok(comparison_report(eps, t, psi.domain().dim(), lhs, shifted))
}

/// Exact route for the non-exit event, both sides from the spectral expansion.
pub fn comparison_bound_nonexit_exact(
    psi: &ConductanceField,
    phi: &ConductanceField,
    eps: f64,
    t: f64,
) -> Result<ComparisonReport> {
    let lowered = comparison_setup(psi, phi, eps)?;
    let exact = |v: f64| Estimate { value: v, se: 0.0, n: 0 };
    let lhs = exact(spectral::semigroup_nonexit(phi, t)?);
    let shifted = exact(spectral::semigroup_nonexit(&lowered, t)?);
    Ok(comparison_report(eps, t, psi.domain().dim(), lhs, shifted))
}

/// A set of occupation measures `h²` over which the Feynman–Kac exponent is maximised.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSet {
    Point(Vec<f64>),
    /// Coordinatewise box `lo ≤ h² ≤ hi`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Convex hull of the listed measures.
    Vertices(Vec<Vec<f64>>),
}

impl TargetSet {
    fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::UnsupportedSetShape(msg));
        match self {
            TargetSet::Point(p) if p.len() != n => bad(format!("point has {} coordinates, need {n}", p.len())),
            TargetSet::Box { lo, hi } => {
                if lo.len() != n || hi.len() != n {
                    return bad(format!("box corners need {n} coordinates"));
                }
                if lo.iter().zip(hi).any(|(a, b)| a > b) {
                    return bad("box has lo > hi".into());
                }
                Ok(())
            }
            TargetSet::Vertices(vs) if vs.is_empty() => bad("empty vertex list".into()),
            TargetSet::Vertices(vs) if vs.iter().any(|v| v.len() != n) => {
                bad(format!("vertices need {n} coordinates"))
            }
            _ => Ok(()),
        }
    }

    /// `sup_{h² ∈ A} Σ c(x) h²(x)`.
    pub fn sup_linear(&self, c: &[f64]) -> f64 {
        let dot = |v: &[f64]| v.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
        match self {
            TargetSet::Point(p) => dot(p),
            TargetSet::Box { lo, hi } => c
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(ci, (l, h))| (ci * l).max(ci * h))
                .sum(),
            TargetSet::Vertices(vs) => vs.iter().map(|v| dot(v)).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Whether an occupation measure lies in the set (for the vertex form:
    /// only its bounding box is tested).
    pub fn contains(&self, m: &[f64]) -> bool {
        match self {
            TargetSet::Point(p) => p == m,
            TargetSet::Box { lo, hi } => m.iter().zip(lo.iter().zip(hi)).all(|(x, (l, h))| l <= x && x <= h),
            TargetSet::Vertices(vs) => (0..m.len()).all(|k| {
                let lo = vs.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min);
                let hi = vs.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max);
                lo <= m[k] && m[k] <= hi
            }),
        }
    }
}

/// `Δ^φ f(x) / f(x)` on `B` for `f` positive on `B` and zero outside.
pub fn generator_ratio(f_test: &[f64], phi: &ConductanceField) -> Result<Vec<f64>> {
    let dom: &Domain = phi.domain();
    if f_test.len() != dom.len() {
        return Err(Error::InvalidProfile(format!(
            "test function has {} values for {} sites",
            f_test.len(),
            dom.len()
        )));
    }
    if let Some(v) = f_test.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidProfile(format!("test function must be positive on B, got {v}")));
    }
    Ok((0..dom.len())
        .map(|x| {
            let lap: f64 = dom
                .incident(x)
                .iter()
                .map(|inc| {
                    let fy = match inc.to {
                        crate::domain::Neighbor::Site(y) => f_test[y],
                        crate::domain::Neighbor::Exit => 0.0,
                    };
                    phi.weight(inc.edge) * (fy - f_test[x])
                })
                .sum();
            lap / f_test[x]
        })
        .collect())
}

/// Feynman–Kac bound on `P_0^φ(ℓ_t/t ∈ A)`:
/// `f(0)/min_B f · exp(t sup_{h² ∈ A} Σ_x (Δ^φ f / f)(x) h²(x))`.
pub fn feynman_kac_upper_bound(
    f_test: &[f64],
    phi: &ConductanceField,
    target: &TargetSet,
    t: f64,
) -> Result<f64> {
    let ratio = generator_ratio(f_test, phi)?;
    target.validate(ratio.len())?;
    let origin = phi.domain().origin_index();
    let min_f = f_test.iter().copied().fold(f64::INFINITY, f64::min);
    let exponent = if t == 0.0 { 0.0 } else { t * target.sup_linear(&ratio) };
    Ok(f_test[origin] / min_f * exponent.exp())
}

/// Event `{no exit by t, ℓ_t/t ∈ A}` for use with the simulators.
pub fn occupation_event<'a>(target: &'a TargetSet, num_sites: usize) -> impl Fn(&PathRecord) -> bool + 'a {
    move |p: &PathRecord| !p.exited() && target.contains(&local_times(p, num_sites).normalized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Point;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn field(points: &[i64], w: &[f64]) -> ConductanceField {
        let pts: Vec<Point> = points.iter().map(|&p| vec![p]).collect();
        ConductanceField::new(Arc::new(Domain::new(&pts, 1).unwrap()), w.to_vec()).unwrap()
    }

    #[test]
    fn identity_and_empty_path() {
        let phi = field(&[0, 1], &[0.5, 1.5, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p = simulate(&phi, 3.0, &mut rng);
            assert_eq!(girsanov_log_density(&p, &phi, &phi).unwrap(), 0.0);
        }
        let psi = field(&[0, 1], &[1.0, 1.0, 1.0]);
        let still = PathRecord { start: 0, jump_times: vec![], sites: vec![0], edges: vec![], horizon: 2.0, exit: None };
        // φ̄(0) = 2, ψ̄(0) = 2 ⇒ 0; use a different φ at the origin
        let phi2 = field(&[0, 1], &[3.0, 1.0, 1.0]);
        assert_relative_eq!(girsanov_log_density(&still, &phi2, &psi).unwrap(), -2.0 * 2.0);
        assert_eq!(girsanov_log_density(&still, &phi, &phi).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_fields() {
        let a = field(&[0], &[1.0, 1.0]);
        let b = field(&[0, 1], &[1.0, 1.0, 1.0]);
        let p = simulate(&a, 1.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(girsanov_log_density(&p, &a, &b), Err(Error::FieldMismatch));
    }

    #[test]
    fn cocycle_and_antisymmetry() {
        let phi = field(&[0, 1], &[0.5, 1.5, 2.0]);
        let psi = field(&[0, 1], &[1.0, 1.0, 1.0]);
        let chi = field(&[0, 1], &[0.8, 0.3, 1.7]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let p = simulate(&psi, 2.0, &mut rng);
            let ab = girsanov_log_density(&p, &phi, &psi).unwrap();
            let bc = girsanov_log_density(&p, &psi, &chi).unwrap();
            let ac = girsanov_log_density(&p, &phi, &chi).unwrap();
            assert!((ab + bc - ac).abs() < 1e-12);
            let ba = girsanov_log_density(&p, &psi, &phi).unwrap();
            assert!((ab + ba).abs() < 1e-12);
        }
    }

    #[test]
    fn reweighting_normalises_and_matches_semigroup() {
        let phi = field(&[0, 1], &[0.6, 1.4, 0.9]);
        let psi = field(&[0, 1], &[1.0, 1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let all = reweighted_probability(|_| true, &phi, &psi, 1.0, 50_000, &mut rng).unwrap();
        assert!(all.z_exact(1.0) < 3.0, "{all:?}");
        let stay = reweighted_probability(|p| !p.exited(), &phi, &psi, 1.0, 50_000, &mut rng).unwrap();
        let exact = spectral::semigroup_nonexit(&phi, 1.0).unwrap();
        assert!(stay.z_exact(exact) < 3.0, "{stay:?} vs {exact}");
    }

    #[test]
    fn reweighting_with_equal_fields_is_plain_mc() {
        let phi = field(&[0], &[1.0, 2.0]);
        let a = reweighted_probability(|p| !p.exited(), &phi, &phi, 0.5, 1000, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = direct_probability(|p| !p.exited(), &phi, 0.5, 1000, &mut ChaCha8Rng::seed_from_u64(4));
        assert!((a.value - b.value).abs() <= 1e-12, "{a:?} vs {b:?}");
    }

    #[test]
    fn comparison_bound() {
        let psi = field(&[0, 1], &[1.0, 1.0, 1.0]);
        let phi = field(&[0, 1], &[1.05, 0.92, 1.1]);
        let r = comparison_bound_nonexit_exact(&psi, &phi, 0.1, 1.0).unwrap();
        assert!(!r.violated && r.margin > 0.0);
        let same = comparison_bound_nonexit_exact(&psi, &psi, 1e-9, 1.0).unwrap();
        assert!((same.lhs.value - same.factor * same.shifted.value).abs() < 1e-7);
        assert!(matches!(
            comparison_bound_nonexit_exact(&psi, &phi, 1.0, 1.0),
            Err(Error::EpsilonTooLarge { .. })
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let empty = comparison_bound_check(&psi, &phi, 0.1, |_| false, 1.0, 100, &mut rng).unwrap();
        assert_eq!((empty.lhs.value, empty.shifted.value), (0.0, 0.0));
        assert!(!empty.violated);
    }

    #[test]
    fn feynman_kac_examples() {
        let phi = field(&[0], &[1.0, 1.0]);
        let point = TargetSet::Point(vec![1.0]);
        let b = feynman_kac_upper_bound(&[1.0], &phi, &point, 1.5).unwrap();
        assert_relative_eq!(b, (-3.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(b, spectral::semigroup_nonexit(&phi, 1.5).unwrap(), max_relative = 1e-14);

        let pair = field(&[0, 1], &[1.0, 2.0, 1.0]);
        let f = [2.0, 1.0];
        assert_eq!(feynman_kac_upper_bound(&f, &pair, &TargetSet::Point(vec![0.5, 0.5]), 0.0).unwrap(), 2.0);
        assert!(feynman_kac_upper_bound(&[1.0, 0.0], &pair, &point, 1.0).is_err());
        assert!(matches!(
            feynman_kac_upper_bound(&f, &pair, &TargetSet::Vertices(vec![]), 1.0),
            Err(Error::UnsupportedSetShape(_))
        ));
    }

    #[test]
    fn sup_of_linear_functional() {
        let c = [1.0, -2.0];
        let bx = TargetSet::Box { lo: vec![0.1, 0.2], hi: vec![0.6, 0.9] };
        assert_relative_eq!(bx.sup_linear(&c), 0.6 - 0.4);
        let vs = TargetSet::Vertices(vec![vec![0.5, 0.5], vec![0.9, 0.1]]);
        assert_relative_eq!(vs.sup_linear(&c), 0.7);
    }
}
