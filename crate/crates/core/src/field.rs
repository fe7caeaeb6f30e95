//! Conductance fields on `E_B`.
//!
//! Only the edges of `E_B` are ever materialised: the walk is killed when it
//! leaves `B`, so bonds further out never enter any quantity computed here.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, DomainDoc};
use crate::error::{Error, Result};
use crate::rates::ProbabilityProfile;
use crate::tail_law::TailLaw;

/// Default value assigned by [`optimal_profile`] to edges with no gradient.
pub const DEFAULT_CAP: f64 = 1e6;

/// Strictly positive finite weights on `E_B`, in canonical edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceField {
    domain: Arc<Domain>,
    weights: Vec<f64>,
}

/// JSON form: the domain alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDoc {
    pub domain: DomainDoc,
    pub weights: Vec<f64>,
}

impl ConductanceField {
    pub fn new(domain: Arc<Domain>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != domain.num_edges() {
            return Err(Error::InvalidField(format!(
                "{} weights for {} edges",
                weights.len(),
                domain.num_edges()
            )));
        }
        if let Some((edge, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::NonPositiveWeight { edge, value });
        }
        Ok(ConductanceField { domain, weights })
    }

    /// The same weight on every edge.
    pub fn constant(domain: Arc<Domain>, value: f64) -> Result<Self> {
        let n = domain.num_edges();
        ConductanceField::new(domain, vec![value; n])
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, edge: usize) -> f64 {
        self.weights[edge]
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Total conductance `ω̄(x) = Σ_{y∼x} ω_xy` at a site.
    pub fn total_at(&self, site: usize) -> f64 {
        self.domain.incident(site).iter().map(|inc| self.weights[inc.edge]).sum()
    }

    /// Every weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::NonPositiveScale(c));
        }
        ConductanceField::new(self.domain.clone(), self.weights.iter().map(|w| w * c).collect())
    }

    /// Elementwise map, revalidated.
    pub fn map<F: Fn(usize, f64) -> f64>(&self, f: F) -> Result<Self> {
        let w = self.weights.iter().enumerate().map(|(i, &w)| f(i, w)).collect();
        ConductanceField::new(self.domain.clone(), w)
    }

    pub fn to_doc(&self) -> FieldDoc {
        FieldDoc { domain: self.domain.to_doc(), weights: self.weights.clone() }
    }

    pub fn from_doc(doc: &FieldDoc) -> Result<Self> {
        let domain = Arc::new(Domain::from_doc(&doc.domain)?);
        ConductanceField::new(domain, doc.weights.clone())
    }
}

/// I.i.d. draws from `law`, one per edge in canonical order.
pub fn sample_field<R: Rng + ?Sized>(law: &TailLaw, dom: &Arc<Domain>, rng: &mut R) -> ConductanceField {
    let weights = law.sample(rng, dom.num_edges());
    ConductanceField { domain: dom.clone(), weights }
}

pub fn scale_field(f: &ConductanceField, c: f64) -> Result<ConductanceField> {
    f.scaled(c)
}

/// The environment profile that minimises `I_φ(g²) + H(φ)` edge by edge:
/// `(Dη)^{1/(η+1)} |g(y) - g(x)|^{-2/(η+1)}`, or `cap` where `g(x) = g(y)`.
pub fn optimal_profile(g: &ProbabilityProfile, law: &TailLaw, cap: f64) -> Result<ConductanceField> {
    if !(cap.is_finite() && cap > 0.0) {
        return Err(Error::InvalidProfile(format!("cap must be positive and finite, got {cap}")));
    }
    let eta = law.eta();
    let prefactor = (law.dcoef() * eta).powf(1.0 / (eta + 1.0));
    let weights = g
        .edge_differences()
        .into_iter()
        .map(|d| if d > 0.0 { prefactor * d.powf(-2.0 / (eta + 1.0)) } else { cap })
        .collect();
    ConductanceField::new(g.domain().clone(), weights)
        .map_err(|e| Error::InvalidProfile(format!("optimal profile is not a valid field: {e}")))
}

/// Sum of the log-densities of the weights under `law`.
pub fn log_prior_density(f: &ConductanceField, law: &TailLaw) -> f64 {
    log_density_sum(f.weights(), law)
}

/// Sum of log-densities over an arbitrary list of positive weights.
pub fn log_density_sum(weights: &[f64], law: &TailLaw) -> f64 {
    weights.iter().map(|&w| law.log_density_unchecked(w)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Point;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(points: &[i64]) -> Arc<Domain> {
        let pts: Vec<Point> = points.iter().map(|&p| vec![p]).collect();
        Arc::new(Domain::new(&pts, 1).unwrap())
    }

    #[test]
    fn validation() {
        let dom = line(&[0]);
        assert!(ConductanceField::new(dom.clone(), vec![1.0]).is_err());
        assert_eq!(
            ConductanceField::new(dom.clone(), vec![1.0, 0.0]),
            Err(Error::NonPositiveWeight { edge: 1, value: 0.0 })
        );
        assert!(ConductanceField::new(dom, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn sampled_field_shape_and_seed() {
        let dom = line(&[0]);
        let law = TailLaw::new(1.0, 1.0).unwrap();
        let a = sample_field(&law, &dom, &mut ChaCha8Rng::seed_from_u64(3));
        let b = sample_field(&law, &dom, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a.weights().len(), 2);
        assert_eq!(a, b);
    }

    #[test]
    fn scaling() {
        let dom = line(&[0]);
        let f = ConductanceField::new(dom, vec![1.0, 3.0]).unwrap();
        assert_eq!(f.scaled(1.0).unwrap(), f);
        assert_eq!(f.scaled(2.0).unwrap().weights(), &[2.0, 6.0]);
        let back = f.scaled(7.3).unwrap().scaled(1.0 / 7.3).unwrap();
        for (x, y) in back.weights().iter().zip(f.weights()) {
            assert!((x - y).abs() <= 2.0 * f64::EPSILON * y);
        }
        assert_eq!(f.scaled(0.0), Err(Error::NonPositiveScale(0.0)));
        assert!(f.scaled(-1.0).is_err());
    }

    #[test]
    fn optimal_profile_examples() {
        let single = line(&[0]);
        let g = ProbabilityProfile::new(single.clone(), vec![1.0]).unwrap();
        let f = optimal_profile(&g, &TailLaw::new(1.0, 1.0).unwrap(), DEFAULT_CAP).unwrap();
        assert_eq!(f.weights(), &[1.0, 1.0]);
        let f4 = optimal_profile(&g, &TailLaw::new(1.0, 4.0).unwrap(), DEFAULT_CAP).unwrap();
        assert_relative_eq!(f4.weights()[0], 2.0, max_relative = 1e-15);

        let pair = line(&[0, 1]);
        let u = ProbabilityProfile::uniform(pair);
        let fu = optimal_profile(&u, &TailLaw::new(1.0, 1.0).unwrap(), 123.0).unwrap();
        assert_eq!(fu.weights()[1], 123.0);
        assert_relative_eq!(fu.weights()[0], 2f64.sqrt(), max_relative = 1e-15);
        assert!(optimal_profile(&u, &TailLaw::new(1.0, 1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn optimal_profile_scale_consistency() {
        let dom = line(&[-1, 0, 1]);
        let g = ProbabilityProfile::normalized(dom, &[0.3, 0.9, 0.2]).unwrap();
        let (eta, d, c): (f64, f64, f64) = (1.7, 0.6, 2.5);
        let base = optimal_profile(&g, &TailLaw::new(eta, d).unwrap(), DEFAULT_CAP).unwrap();
        let moved = optimal_profile(&g, &TailLaw::new(eta, d * c.powf(eta + 1.0)).unwrap(), DEFAULT_CAP).unwrap();
        for (a, b) in base.weights().iter().zip(moved.weights()) {
            assert_relative_eq!(*b, c * a, max_relative = 1e-13);
        }
    }

    #[test]
    fn prior_density_examples() {
        let dom = line(&[0]);
        let law = TailLaw::new(1.0, 1.0).unwrap();
        let f = ConductanceField::new(dom, vec![1.0, 1.0]).unwrap();
        assert_relative_eq!(log_prior_density(&f, &law), -2.0, max_relative = 1e-15);
        let m = law.quantile(0.5).unwrap();
        assert_eq!(log_density_sum(&[m], &law), law.log_density(m).unwrap());
    }

    #[test]
    fn prior_density_decreases_past_mode() {
        // mode of Dη x^{-η-1} e^{-Dx^{-η}} is (Dη/(η+1))^{1/η}; scan upwards from it
        let law = TailLaw::new(1.3, 0.9).unwrap();
        let mode = (law.dcoef() * law.eta() / (law.eta() + 1.0)).powf(1.0 / law.eta());
        let mut prev = log_density_sum(&[mode, 1.0], &law);
        for k in 1..200 {
            let x = mode * (1.0 + 0.05 * k as f64);
            let v = log_density_sum(&[x, 1.0], &law);
            assert!(v < prev, "not decreasing at {x}");
            prev = v;
        }
    }

    #[test]
    fn doc_round_trip() {
        let f = ConductanceField::new(line(&[0, 1]), vec![0.5, 1.5, 2.5]).unwrap();
        let json = serde_json::to_string(&f.to_doc()).unwrap();
        let back = ConductanceField::from_doc(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, f);
    }
}
