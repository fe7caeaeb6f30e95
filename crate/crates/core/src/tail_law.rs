//! The conductance marginal law.
//!
//! [`TailLaw`] is the Fréchet-type law with distribution function
//! `F(x) = exp(-D x^{-η})` on `(0, ∞)`, so `log P(ω ≤ ε) = -D ε^{-η}` holds
//! for every `ε > 0`, not only as `ε → 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailLaw {
    eta: f64,
    #[serde(rename = "D")]
    dcoef: f64,
}

impl TailLaw {
    pub fn new(eta: f64, dcoef: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(eta) || !ok(dcoef) {
            return Err(Error::InvalidLaw { eta, dcoef });
        }
        Ok(TailLaw { eta, dcoef })
    }

    /// Tail exponent `η`.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Tail coefficient `D`.
    pub fn dcoef(&self) -> f64 {
        self.dcoef
    }

    /// `log P(ω ≤ x) = -D x^{-η}`.
    pub fn log_cdf(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::NonPositiveArgument(x));
        }
        Ok(-self.dcoef * x.powf(-self.eta))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(self.log_cdf(x)?.exp())
    }

    /// Inverse of [`cdf`](Self::cdf) on `(0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::ArgumentOutOfRange(u));
        }
        Ok((self.dcoef / -u.ln()).powf(1.0 / self.eta))
    }

    pub fn median(&self) -> f64 {
        (self.dcoef / std::f64::consts::LN_2).powf(1.0 / self.eta)
    }

    pub fn log_density(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::NonPositiveArgument(x));
        }
        Ok(self.log_density_unchecked(x))
    }

    // log(Dη) - (η+1) log x - D x^{-η}; -inf where x^{-η} overflows
    pub(crate) fn log_density_unchecked(&self, x: f64) -> f64 {
        let tail = self.dcoef * x.powf(-self.eta);
        if tail.is_infinite() {
            return f64::NEG_INFINITY;
        }
        (self.dcoef * self.eta).ln() - (self.eta + 1.0) * x.ln() - tail
    }

    /// One draw by inversion, consuming exactly one uniform.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                return (self.dcoef / -u.ln()).powf(1.0 / self.eta);
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// `log E[exp(-s ω)]` for `s ≥ 0`, by quadrature in `u = log x`.
    ///
    /// The log-integrand `log(Dη) - ηu - D e^{-ηu} - s e^u` is strictly
    /// concave, so its mode is found by bisection on the derivative and the
    /// integral is taken relative to the peak value.
    pub fn log_laplace(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::NonPositiveArgument(s));
        }
        let (eta, d) = (self.eta, self.dcoef);
        let c = (d * eta).ln();
        let h = |u: f64| {
            let a = d * (-eta * u).exp();
            let b = if s == 0.0 { 0.0 } else { s * u.exp() };
            c - eta * u - a - b
        };
        let dh = |u: f64| {
            let b = if s == 0.0 { 0.0 } else { s * u.exp() };
            -eta + d * eta * (-eta * u).exp() - b
        };
        // mode of the s = 0 density in u is log(D)/η; the Laplace weight pulls it left
        let guess = if s > 0.0 {
            (d.ln() / eta).min(-(s.ln()) / (eta + 1.0) + (d * eta).ln() / (eta + 1.0))
        } else {
            d.ln() / eta
        };
        quadrature::log_integrate_concave(h, dh, guess, 1e-11)
    }
}

/// Distribution function `exp(-D eps^{-η})`.
pub fn cdf(law: &TailLaw, eps: f64) -> Result<f64> {
    law.cdf(eps)
}

pub fn quantile(law: &TailLaw, u: f64) -> Result<f64> {
    law.quantile(u)
}

pub fn log_density(law: &TailLaw, x: f64) -> Result<f64> {
    law.log_density(x)
}

pub fn sample<R: Rng + ?Sized>(law: &TailLaw, rng: &mut R, n: usize) -> Vec<f64> {
    law.sample(rng, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn law(eta: f64, d: f64) -> TailLaw {
        TailLaw::new(eta, d).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(TailLaw::new(0.0, 1.0).is_err());
        assert!(TailLaw::new(1.0, -1.0).is_err());
        assert!(TailLaw::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn cdf_values() {
        assert_relative_eq!(law(1.0, 1.0).cdf(1.0).unwrap(), (-1.0f64).exp(), max_relative = 1e-15);
        assert_eq!(law(2.0, 3.0).cdf(1e200).unwrap(), 1.0);
        // e^{-10} = 4.539992976248485e-5 (mpmath, 40 digits)
        assert_relative_eq!(law(1.0, 1.0).cdf(0.1).unwrap(), 4.539_992_976_248_485e-5, max_relative = 1e-14);
        assert_eq!(law(1.0, 1.0).cdf(0.0), Err(Error::NonPositiveArgument(0.0)));
        assert!(law(1.0, 1.0).cdf(-1.0).is_err());
    }

    #[test]
    fn quantile_values() {
        let l = law(1.0, 1.0);
        assert_relative_eq!(l.quantile((-1.0f64).exp()).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(l.quantile((-2.0f64).exp()).unwrap(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(law(2.0, 1.0).quantile((-4.0f64).exp()).unwrap(), 0.5, max_relative = 1e-15);
        assert_eq!(l.quantile(0.0), Err(Error::ArgumentOutOfRange(0.0)));
        assert_eq!(l.quantile(1.0), Err(Error::ArgumentOutOfRange(1.0)));
        assert_relative_eq!(l.median(), l.quantile(0.5).unwrap(), max_relative = 1e-15);
    }

    #[test]
    fn log_density_values() {
        assert_relative_eq!(law(1.0, 1.0).log_density(1.0).unwrap(), -1.0, max_relative = 1e-15);
        let expected = -(2f64.ln()) - 1.0;
        assert_relative_eq!(law(1.0, 2.0).log_density(2.0).unwrap(), expected, max_relative = 1e-15);
        assert!(law(1.0, 1.0).log_density(0.0).is_err());
        assert_eq!(law(3.0, 1.0).log_density_unchecked(1e-200), f64::NEG_INFINITY);
    }

    #[test]
    fn density_normalises() {
        for (eta, d) in [(1.0, 1.0), (0.5, 2.0), (2.0, 0.3), (4.0, 1.0)] {
            let v = law(eta, d).log_laplace(0.0).unwrap();
            assert!(v.abs() < 1e-8, "eta={eta} D={d}: log mass {v}");
        }
    }

    #[test]
    fn laplace_matches_bessel_closed_form() {
        // eta = 1 is inverse-gamma(1, D): E e^{-sω} = 2 sqrt(Ds) K_1(2 sqrt(Ds)); values from mpmath
        let l = law(1.0, 1.0);
        let cases = [
            (1.0, -1.273_924_122_000_568_6),
            (100.0, -18.258_041_966_811_91),
            (1e4, -197.123_179_631_204_13),
            (1e8, -19_994.822_446_121_556),
        ];
        for (s, exact) in cases {
            let v = l.log_laplace(s).unwrap();
            assert_relative_eq!(v, exact, max_relative = 1e-9);
        }
        // eta = 2, D = 1 by mpmath quadrature
        let v = law(2.0, 1.0).log_laplace(1000.0).unwrap();
        assert_relative_eq!(v, -186.198_216_561_016_55, max_relative = 1e-9);
    }

    #[test]
    fn sampling_is_deterministic() {
        let l = law(1.5, 0.7);
        assert!(l.sample(&mut ChaCha8Rng::seed_from_u64(1), 0).is_empty());
        let a = l.sample(&mut ChaCha8Rng::seed_from_u64(42), 100);
        let b = l.sample(&mut ChaCha8Rng::seed_from_u64(42), 100);
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| x > 0.0 && x.is_finite()));
    }
}
