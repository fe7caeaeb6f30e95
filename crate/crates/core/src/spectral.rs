//! Dirichlet restriction of `-Δ^ω` to `B` and its spectrum.
//!
//! The operator is the symmetric matrix with `A_xx = ω̄(x)` (all `2d` incident
//! edges, boundary ones included) and `A_xy = -ω_xy` for interior edges. Its
//! quadratic form is the Donsker–Varadhan rate: `(A g, g) = I_ω(g²)`.
//! Boundary edges act as a killing term, so `A` is positive definite.
//!
//! The non-exit probability comes from the eigen-expansion
//! `P_z(X_[0,t] ⊂ B) = Σ_i e^{-tλ_i} v_i(z) (v_i, 1)`.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::domain::{Domain, EdgeKind};
use crate::error::{Error, Result};
use crate::field::{sample_field, ConductanceField};
use crate::quadrature;
use crate::tail_law::TailLaw;

/// Dense symmetric matrix of the Dirichlet operator, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletOperator {
    n: usize,
    entries: Vec<f64>,
}

impl DirichletOperator {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.entries
            .chunks(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `(A g, g)`.
    pub fn quadratic_form(&self, g: &[f64]) -> f64 {
        self.apply(g).iter().zip(g).map(|(a, b)| a * b).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// Builds the Dirichlet operator of a field on its domain.
pub fn assemble(f: &ConductanceField) -> DirichletOperator {
    let dom = f.domain();
    let n = dom.len();
    let mut entries = vec![0.0; n * n];
    for (k, e) in dom.edges().iter().enumerate() {
        let w = f.weight(k);
        let (a, b) = e.sites();
        match e.kind {
            EdgeKind::Interior => {
                let (i, j) = (a.unwrap(), b.unwrap());
                entries[i * n + i] += w;
                entries[j * n + j] += w;
                entries[i * n + j] -= w;
                entries[j * n + i] -= w;
            }
            EdgeKind::Boundary => {
                let i = a.or(b).unwrap();
                entries[i * n + i] += w;
            }
        }
    }
    DirichletOperator { n, entries }
}

/// Ascending eigenvalues with orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub values: Vec<f64>,
    /// `vectors[i]` belongs to `values[i]`.
    pub vectors: Vec<Vec<f64>>,
}

const MAX_SWEEPS: usize = 100;

/// Full eigendecomposition by the cyclic Jacobi method.
pub fn eigen(op: &DirichletOperator) -> Result<SpectralDecomposition> {
    let n = op.n;
    let mut a = op.entries.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = op.norm();
    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NonConvergence {
                iterations: sweeps,
                detail: "Jacobi sweep cap reached".into(),
            });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        converged = off <= 1e-15 * scale;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&col| {
            let mut vec: Vec<f64> = (0..n).map(|k| v[k * n + col]).collect();
            // sign convention: nonnegative component sum, ties by first nonzero entry
            let sum: f64 = vec.iter().sum();
            let first = vec.iter().copied().find(|x| x.abs() > 1e-14).unwrap_or(1.0);
            if sum < -1e-12 || (sum.abs() <= 1e-12 && first < 0.0) {
                vec.iter_mut().for_each(|x| *x = -*x);
            }
            vec
        })
        .collect();
    Ok(SpectralDecomposition { values, vectors })
}

impl SpectralDecomposition {
    pub fn principal(&self) -> f64 {
        self.values[0]
    }

    /// `log Σ_i e^{-tλ_i} v_i(z)(v_i, 1)`, computed relative to `e^{-tλ_1}`
    /// so that it stays finite for large `t`.
    pub fn log_nonexit(&self, start: usize, t: f64) -> f64 {
        let lead = self.values[0];
        let sum: f64 = self
            .values
            .iter()
            .zip(&self.vectors)
            .map(|(&lam, v)| (-(t * (lam - lead))).exp() * v[start] * v.iter().sum::<f64>())
            .sum();
        if sum <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -t * lead + sum.ln()
    }

    /// `P_z(X_[0,t] ⊂ B)`, clamped to `[0, 1]`.
    pub fn nonexit(&self, start: usize, t: f64) -> f64 {
        let raw: f64 = self
            .values
            .iter()
            .zip(&self.vectors)
            .map(|(&lam, v)| (-t * lam).exp() * v[start] * v.iter().sum::<f64>())
            .sum();
        if !(-1e-10..=1.0 + 1e-10).contains(&raw) {
            log::warn!("non-exit probability {raw:e} outside [0, 1] at t = {t}; clamping");
        }
        raw.clamp(0.0, 1.0)
    }
}

/// `P_0(X_[0,t] ⊂ B)` for the walk in field `f`, started at the origin.
pub fn semigroup_nonexit(f: &ConductanceField, t: f64) -> Result<f64> {
    semigroup_nonexit_from(f, f.domain().origin_index(), t)
}

pub fn semigroup_nonexit_from(f: &ConductanceField, start: usize, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::NonPositiveArgument(t));
    }
    Ok(eigen(&assemble(f))?.nonexit(start, t))
}

/// `log P_0(X_[0,t] ⊂ B)`, finite far below the `f64` underflow threshold.
pub fn log_semigroup_nonexit(f: &ConductanceField, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::NonPositiveArgument(t));
    }
    Ok(eigen(&assemble(f))?.log_nonexit(f.domain().origin_index(), t))
}

/// Both sides of the two eigenvalue sandwich inequalities.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub t: f64,
    pub lambda1: f64,
    pub p_origin: f64,
    /// `|B|² e^{-tλ_1}`.
    pub upper_bound: f64,
    /// `e^{-tλ_1}`.
    pub principal_term: f64,
    /// `Σ_z P_z(X_[0,t] ⊂ B)`.
    pub sum_over_starts: f64,
    /// `upper_bound - p_origin`; nonnegative when the first inequality holds.
    pub upper_margin: f64,
    /// `sum_over_starts - principal_term`; nonnegative when the second holds.
    pub lower_margin: f64,
}

pub fn sandwich_check(f: &ConductanceField, t: f64) -> Result<SandwichReport> {
    if !(t >= 0.0) {
        return Err(Error::NonPositiveArgument(t));
    }
    let dec = eigen(&assemble(f))?;
    let n = f.domain().len();
    let lambda1 = dec.principal();
    let p_origin = dec.nonexit(f.domain().origin_index(), t);
    let principal_term = (-t * lambda1).exp();
    let upper_bound = (n * n) as f64 * principal_term;
    let sum_over_starts: f64 = (0..n).map(|z| dec.nonexit(z, t)).sum();
    Ok(SandwichReport {
        t,
        lambda1,
        p_origin,
        upper_bound,
        principal_term,
        sum_over_starts,
        upper_margin: upper_bound - p_origin,
        lower_margin: sum_over_starts - principal_term,
    })
}

#[derive(Debug, Clone, Copy)]
pub enum TailMethod {
    /// Empirical frequency over `n` sampled fields.
    MonteCarlo { n: usize },
    /// Convolution quadrature; single-site domains in `d = 1` only.
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailPoint {
    pub eps: f64,
    pub prob: f64,
    pub log_prob: f64,
    /// `ε^η log P(λ ≤ ε)`, to be compared with `-D L_η(B)^{η+1}`.
    pub scaled_log_prob: f64,
}

/// Lower tail `P(λ^ω(B) ≤ ε)` of the principal eigenvalue at each `ε`.
pub fn eigen_tail<R: Rng + ?Sized>(
    law: &TailLaw,
    dom: &Arc<Domain>,
    eps_list: &[f64],
    method: TailMethod,
    rng: &mut R,
) -> Result<Vec<TailPoint>> {
    if let Some(&e) = eps_list.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::NonPositiveArgument(e));
    }
    let point = |eps: f64, log_prob: f64| TailPoint {
        eps,
        prob: log_prob.exp(),
        log_prob,
        scaled_log_prob: eps.powf(law.eta()) * log_prob,
    };
    match method {
        TailMethod::Quadrature => {
            if dom.len() != 1 || dom.dim() != 1 {
                return Err(Error::UnsupportedDomain(
                    "quadrature eigen tail needs a single site in d = 1".into(),
                ));
            }
            eps_list
                .iter()
                .map(|&eps| Ok(point(eps, log_two_sum_cdf(law, eps)?)))
                .collect()
        }
        TailMethod::MonteCarlo { n } => {
            let mut lambdas = Vec::with_capacity(n);
            for _ in 0..n {
                let f = sample_field(law, dom, rng);
                lambdas.push(eigen(&assemble(&f))?.principal());
            }
            Ok(eps_list
                .iter()
                .map(|&eps| {
                    let hits = lambdas.iter().filter(|&&l| l <= eps).count();
                    point(eps, (hits as f64 / n as f64).ln())
                })
                .collect())
        }
    }
}

/// `log P(ω_1 + ω_2 ≤ ε) = log ∫_0^ε F(ε - x) f(x) dx` for two independent weights.
pub fn log_two_sum_cdf(law: &TailLaw, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveArgument(eps));
    }
    let (eta, d) = (law.eta(), law.dcoef());
    quadrature::log_integrate(
        |x| {
            let rest = eps - x;
            if !(rest > 0.0 && x > 0.0) {
                return f64::NEG_INFINITY;
            }
            -d * rest.powf(-eta) + law.log_density_unchecked(x)
        },
        0.0,
        eps,
        1e-12,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Point;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn field(points: &[i64], w: &[f64]) -> ConductanceField {
        let pts: Vec<Point> = points.iter().map(|&p| vec![p]).collect();
        ConductanceField::new(Arc::new(Domain::new(&pts, 1).unwrap()), w.to_vec()).unwrap()
    }

    fn check_decomposition(op: &DirichletOperator, dec: &SpectralDecomposition) {
        let n = op.size();
        let scale = op.norm();
        for (lam, v) in dec.values.iter().zip(&dec.vectors) {
            let av = op.apply(v);
            let res: f64 = av.iter().zip(v).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
            assert!(res <= 1e-10 * scale, "residual {res}");
        }
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = dec.vectors[i].iter().zip(&dec.vectors[j]).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() <= 1e-10);
            }
        }
        for w in dec.values.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn assembly_examples() {
        assert_eq!(assemble(&field(&[0], &[0.5, 2.0])).rows(), vec![vec![2.5]]);
        let op = assemble(&field(&[0, 1], &[1.0, 2.0, 3.0]));
        assert_eq!(op.rows(), vec![vec![3.0, -2.0], vec![-2.0, 5.0]]);
    }

    #[test]
    fn small_spectra() {
        let dec = eigen(&assemble(&field(&[0], &[0.5, 2.0]))).unwrap();
        assert_eq!(dec.values, vec![2.5]);
        assert_eq!(dec.vectors, vec![vec![1.0]]);
        let op = assemble(&field(&[0, 1], &[1.0, 1.0, 1.0]));
        let dec = eigen(&op).unwrap();
        assert_relative_eq!(dec.values[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(dec.values[1], 3.0, max_relative = 1e-14);
        check_decomposition(&op, &dec);
    }

    #[test]
    fn random_fields_decompose() {
        let law = TailLaw::new(1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dom in [Domain::cube(1, 3).unwrap(), Domain::cube(2, 2).unwrap(), Domain::cube(3, 1).unwrap()] {
            let dom = Arc::new(dom);
            for _ in 0..10 {
                let f = sample_field(&law, &dom, &mut rng);
                let op = assemble(&f);
                let dec = eigen(&op).unwrap();
                check_decomposition(&op, &dec);
                assert!(dec.principal() > 0.0);
                assert!(dec.vectors[0].iter().all(|&x| x > 0.0), "Perron vector is positive");
            }
        }
    }

    #[test]
    fn nonexit_examples() {
        let f = field(&[0], &[1.0, 1.0]);
        assert_eq!(semigroup_nonexit(&f, 0.0).unwrap(), 1.0);
        assert_relative_eq!(semigroup_nonexit(&f, 1.0).unwrap(), (-2.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(log_semigroup_nonexit(&f, 1e6).unwrap(), -2e6, max_relative = 1e-14);
        let g = field(&[-1, 0, 1], &[0.4, 1.1, 0.2, 2.0]);
        assert_relative_eq!(semigroup_nonexit(&g, 0.0).unwrap(), 1.0, max_relative = 1e-12);
        let lp = log_semigroup_nonexit(&g, 3.0).unwrap();
        assert_relative_eq!(lp.exp(), semigroup_nonexit(&g, 3.0).unwrap(), max_relative = 1e-12);
        assert!(semigroup_nonexit(&g, -1.0).is_err());
    }

    #[test]
    fn nonexit_is_nonincreasing_in_t() {
        let law = TailLaw::new(0.8, 1.2).unwrap();
        let dom = Arc::new(Domain::cube(2, 1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let dec = eigen(&assemble(&sample_field(&law, &dom, &mut rng))).unwrap();
            let mut prev = 1.0 + 1e-12;
            for k in 0..60 {
                let p = dec.nonexit(dom.origin_index(), 0.1 * k as f64);
                assert!(p <= prev + 1e-12);
                prev = p;
            }
        }
    }

    #[test]
    fn sandwich_singleton_and_zero_time() {
        let f = field(&[0], &[0.7, 0.6]);
        let r = sandwich_check(&f, 2.0).unwrap();
        assert_relative_eq!(r.p_origin, (-2.6f64).exp(), max_relative = 1e-14);
        assert!(r.upper_margin.abs() < 1e-15 && r.lower_margin.abs() < 1e-15);
        let g = field(&[0, 1], &[1.0, 2.0, 3.0]);
        let r0 = sandwich_check(&g, 0.0).unwrap();
        assert_relative_eq!(r0.upper_bound, 4.0);
        assert_relative_eq!(r0.sum_over_starts, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn eigen_tail_quadrature() {
        let law = TailLaw::new(1.0, 1.0).unwrap();
        let dom = Arc::new(Domain::new(&[vec![0]], 1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = eigen_tail(&law, &dom, &[0.01, 0.1, 1.0], TailMethod::Quadrature, &mut rng).unwrap();
        // mpmath reference values for log P(ω_1 + ω_2 ≤ ε)
        let exact = [-397.123_179_631_204_13, -38.258_041_966_811_91, -3.273_924_122_000_568_6];
        for (p, e) in pts.iter().zip(exact) {
            assert_relative_eq!(p.log_prob, e, max_relative = 1e-9);
        }
        for w in pts.windows(2) {
            assert!(w[0].prob <= w[1].prob);
        }
        for p in &pts {
            let both_small = 2.0 * law.log_cdf(p.eps / 2.0).unwrap();
            assert!(p.log_prob >= both_small);
        }
        let pair = Arc::new(Domain::cube(1, 1).unwrap());
        assert!(eigen_tail(&law, &pair, &[0.1], TailMethod::Quadrature, &mut rng).is_err());
    }

    #[test]
    fn eigen_tail_mc_is_monotone() {
        let law = TailLaw::new(1.0, 1.0).unwrap();
        let dom = Arc::new(Domain::cube(1, 1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let eps = [0.5, 1.0, 2.0, 4.0];
        let pts = eigen_tail(&law, &dom, &eps, TailMethod::MonteCarlo { n: 2000 }, &mut rng).unwrap();
        for w in pts.windows(2) {
            assert!(w[0].prob <= w[1].prob);
        }
    }
}
