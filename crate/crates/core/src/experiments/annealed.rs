//! Annealed non-exit probabilities `⟨P_0^ω(X_[0,t] ⊂ B)⟩`.
//!
//! The quenched probability of every sampled field is taken from the
//! spectral expansion, so the only Monte Carlo layer is over environments.

use std::io::{self, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::{optimal_profile, sample_field, ConductanceField};
use crate::rates::{k_const, ProbabilityProfile};
use crate::spectral::log_semigroup_nonexit;
use crate::stats::LogMean;
use crate::tail_law::TailLaw;
use crate::variational::solve_l;

/// Importance sampling fails below this effective sample size.
pub const MIN_ESS: f64 = 10.0;

const STREAM_MC: u64 = 1;
const STREAM_IS: u64 = 2;
pub(crate) const STREAM_LDP: u64 = 3;

/// Generator for field `k` of an experiment: one ChaCha stream per field, so
/// results do not depend on how fields are spread over threads.
pub(crate) fn field_rng(seed: u64, purpose: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 48) | k as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Quadrature,
    Mc,
    Is,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Quadrature => "quadrature",
            Method::Mc => "mc",
            Method::Is => "is",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnealedEstimate {
    pub t: f64,
    pub estimate: f64,
    pub log_estimate: f64,
    pub se: f64,
    /// `t^{-η/(η+1)} log(estimate)`.
    pub rescaled: f64,
    pub method: Method,
    /// Fields sampled; zero for quadrature.
    pub n: usize,
    pub ess: Option<f64>,
}

/// `t^{-η/(η+1)} · log_value`, taken as 0 at `t = 0`.
pub fn rescale(t: f64, eta: f64, log_value: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.powf(-eta / (eta + 1.0)) * log_value
    }
}

impl AnnealedEstimate {
    fn exact(t: f64, eta: f64, log_value: f64, method: Method) -> Self {
        AnnealedEstimate {
            t,
            estimate: log_value.exp(),
            log_estimate: log_value,
            se: 0.0,
            rescaled: rescale(t, eta, log_value),
            method,
            n: 0,
            ess: None,
        }
    }

    fn from_log_mean(t: f64, eta: f64, m: &LogMean, method: Method) -> Self {
        AnnealedEstimate {
            t,
            estimate: m.value(),
            log_estimate: m.log_mean,
            se: m.se(),
            rescaled: rescale(t, eta, m.log_mean),
            method,
            n: m.n,
            ess: Some(m.ess),
        }
    }
}

pub fn write_estimates_csv<W: Write>(rows: &[AnnealedEstimate], mut out: W) -> io::Result<()> {
    writeln!(out, "t,estimate,log_estimate,se,rescaled,method,n,ess")?;
    for r in rows {
        let ess = r.ess.map(|e| e.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{:e},{},{:e},{},{},{},{}",
            r.t,
            r.estimate,
            r.log_estimate,
            r.se,
            r.rescaled,
            r.method.as_str(),
            r.n,
            ess
        )?;
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::NonPositiveArgument(t));
    }
    Ok(())
}

/// Single site in `d = 1`: the walk stays put until it crosses one of two
/// independent edges, so the annealed value is `E[e^{-tω}]²`.
pub fn annealed_nonexit_quadrature(law: &TailLaw, t: f64) -> Result<AnnealedEstimate> {
    check_time(t)?;
    let log_value = if t == 0.0 { 0.0 } else { 2.0 * law.log_laplace(t)? };
    Ok(AnnealedEstimate::exact(t, law.eta(), log_value, Method::Quadrature))
}

pub fn check_quadrature_domain(dom: &Domain) -> Result<()> {
    if dom.len() != 1 || dom.dim() != 1 {
        return Err(Error::UnsupportedDomain(format!(
            "quadrature needs a single site in d = 1, got {} sites in d = {}",
            dom.len(),
            dom.dim()
        )));
    }
    Ok(())
}

/// Fields drawn from the law itself, averaged by the sample mean.
pub fn annealed_nonexit_mc(
    law: &TailLaw,
    dom: &Arc<Domain>,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<AnnealedEstimate> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(AnnealedEstimate::exact(0.0, law.eta(), 0.0, Method::Mc));
    }
    let logs = (0..n)
        .into_par_iter()
        .map(|k| {
            let f = sample_field(law, dom, &mut field_rng(seed, STREAM_MC, k));
            log_semigroup_nonexit(&f, t)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(AnnealedEstimate::from_log_mean(t, law.eta(), &LogMean::from_logs(&logs), Method::Mc))
}

/// Proposal for importance sampling over environments.
///
/// Edge `e` is drawn as `c_e ω'` with `ω'` from the law, `c_e = min(1,
/// t^{-r} φ_e / median)`, so the proposal median sits at the tilted profile
/// value wherever that lies below the law's own median. Scaling up is never
/// done: it would make the weight `p(x)/q(x)` unbounded in the lower tail.
#[derive(Debug, Clone)]
pub struct TiltedProposal {
    law: TailLaw,
    profile: ConductanceField,
    r: f64,
}

impl TiltedProposal {
    pub fn new(law: TailLaw, profile: ConductanceField, r: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::NonPositiveArgument(r));
        }
        Ok(TiltedProposal { law, profile, r })
    }

    /// Tilted around `φ^(g)` for the profile `g`.
    pub fn around(law: TailLaw, g: &ProbabilityProfile, cap: f64, r: f64) -> Result<Self> {
        let profile = optimal_profile(g, &law, cap)?;
        TiltedProposal::new(law, profile, r)
    }

    /// Tilted around the optimal profile of the variational minimizer.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let law = cfg.law()?;
        let dom = cfg.domain.build()?;
        let g = solve_l(&dom, law.eta(), &cfg.solver)?.minimizer;
        TiltedProposal::around(law, &g, cfg.is.cap_m, cfg.tilt_exponent())
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.profile.domain()
    }

    pub fn profile(&self) -> &ConductanceField {
        &self.profile
    }

    /// Per-edge scale factors `c_e` at time `t`.
    pub fn scales(&self, t: f64) -> Vec<f64> {
        let median = self.law.median();
        let shrink = t.powf(-self.r);
        self.profile.weights().iter().map(|&phi| (shrink * phi / median).min(1.0)).collect()
    }

    /// One field and its log importance weight `log p(ω) - log q(ω)`.
    pub fn draw<R: rand::Rng + ?Sized>(&self, scales: &[f64], rng: &mut R) -> (ConductanceField, f64) {
        let mut log_w = 0.0;
        let weights: Vec<f64> = scales
            .iter()
            .map(|&c| {
                let base = self.law.draw(rng);
                let x = c * base;
                log_w += self.law.log_density_unchecked(x) - self.law.log_density_unchecked(base) + c.ln();
                x
            })
            .collect();
        let f = ConductanceField::new(self.domain().clone(), weights).expect("scaled draws are positive");
        (f, log_w)
    }

    pub fn estimate(&self, t: f64, n: usize, seed: u64) -> Result<AnnealedEstimate> {
        check_time(t)?;
        let eta = self.law.eta();
        if t == 0.0 {
            return Ok(AnnealedEstimate::exact(0.0, eta, 0.0, Method::Is));
        }
        let scales = self.scales(t);
        let logs = (0..n)
            .into_par_iter()
            .map(|k| {
                let (f, log_w) = self.draw(&scales, &mut field_rng(seed, STREAM_IS, k));
                Ok(log_w + log_semigroup_nonexit(&f, t)?)
            })
            .collect::<Result<Vec<f64>>>()?;
        let m = LogMean::from_logs(&logs);
        if m.ess < MIN_ESS {
            return Err(Error::DegenerateWeights { ess: m.ess, min: MIN_ESS });
        }
        Ok(AnnealedEstimate::from_log_mean(t, eta, &m, Method::Is))
    }
}

/// Importance-sampled annealed non-exit probability at each configured time.
pub fn annealed_nonexit_is(cfg: &ExperimentConfig) -> Result<Vec<AnnealedEstimate>> {
    let seed = cfg.require_seed()?;
    let proposal = TiltedProposal::from_config(cfg)?;
    cfg.times.iter().map(|&t| proposal.estimate(t, cfg.trials, seed)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauberianPoint {
    pub m: f64,
    pub t: f64,
    /// `(1/t) log E[exp(-t^{(1+η)/η} M ω)]`.
    pub value: f64,
    /// `-K_{η,D} M^{η/(1+η)}`.
    pub target: f64,
}

/// Laplace-transform side of the lower-tail equivalence at each `t`.
pub fn tauberian_check(law: &TailLaw, m: f64, t_list: &[f64]) -> Result<Vec<TauberianPoint>> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::NonPositiveArgument(m));
    }
    let eta = law.eta();
    let target = -k_const(law) * m.powf(eta / (1.0 + eta));
    t_list
        .iter()
        .map(|&t| {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::NonPositiveArgument(t));
            }
            let s = t.powf((1.0 + eta) / eta) * m;
            Ok(TauberianPoint { m, t, value: law.log_laplace(s)? / t, target })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Point;
    use approx::assert_relative_eq;

    fn line(points: &[i64]) -> Arc<Domain> {
        let pts: Vec<Point> = points.iter().map(|&p| vec![p]).collect();
        Arc::new(Domain::new(&pts, 1).unwrap())
    }

    #[test]
    fn quadrature_values() {
        let law = TailLaw::new(1.0, 1.0).unwrap();
        let zero = annealed_nonexit_quadrature(&law, 0.0).unwrap();
        assert_eq!((zero.estimate, zero.rescaled), (1.0, 0.0));
        // 2 log(2√t K_1(2√t)) from the closed form at η = D = 1
        let frozen = [
            (1e4, -197.123_179_631_204_13),
            (1e6, -1_995.973_569_964_438_7),
            (1e8, -19_994.822_446_121_556),
        ];
        for (t, half) in frozen {
            let e = annealed_nonexit_quadrature(&law, t).unwrap();
            assert_relative_eq!(e.log_estimate, 2.0 * half, max_relative = 1e-8);
        }
        let r8 = annealed_nonexit_quadrature(&law, 1e8).unwrap().rescaled;
        assert!((r8 + 4.0).abs() < 0.02 * 4.0, "{r8}");
        let path: Vec<f64> = [1e4, 1e6, 1e8]
            .iter()
            .map(|&t| annealed_nonexit_quadrature(&law, t).unwrap().rescaled)
            .collect();
        assert!((path[1] + 4.0).abs() < (path[0] + 4.0).abs());
        assert!((path[2] + 4.0).abs() < (path[1] + 4.0).abs());
        assert!(annealed_nonexit_quadrature(&law, -1.0).is_err());
    }

    #[test]
    fn quadrature_domain_check() {
        assert!(check_quadrature_domain(&line(&[0])).is_ok());
        assert!(matches!(check_quadrature_domain(&line(&[0, 1])), Err(Error::UnsupportedDomain(_))));
        assert!(check_quadrature_domain(&Domain::cube(2, 0).unwrap()).is_err());
    }

    #[test]
    fn tauberian_values() {
        let law = TailLaw::new(1.0, 1.0).unwrap();
        let one = tauberian_check(&law, 1.0, &[1e4]).unwrap()[0];
        assert_eq!(one.target, -2.0);
        assert_relative_eq!(one.value, -1.999_48, max_relative = 1e-5);
        let four = tauberian_check(&law, 4.0, &[1e4]).unwrap()[0];
        assert_relative_eq!(four.target, -4.0, max_relative = 1e-15);
        assert_relative_eq!(four.value, -3.999_45, max_relative = 1e-5);
        let tiny = tauberian_check(&law, 1e-300, &[10.0]).unwrap()[0];
        assert!(tiny.value.abs() < 1e-12);
        assert!(tauberian_check(&law, 0.0, &[1.0]).is_err());
    }

    #[test]
    fn zero_time_is_one() {
        let law = TailLaw::new(1.0, 1.0).unwrap();
        let g = ProbabilityProfile::uniform(line(&[0, 1]));
        let p = TiltedProposal::around(law, &g, 1e6, 0.5).unwrap();
        let e = p.estimate(0.0, 10, 1).unwrap();
        assert_eq!((e.estimate, e.se), (1.0, 0.0));
        let m = annealed_nonexit_mc(&law, g.domain(), 0.0, 10, 1).unwrap();
        assert_eq!(m.estimate, 1.0);
    }

    #[test]
    fn proposal_scales_follow_the_tilt() {
        let law = TailLaw::new(1.0, 1.0).unwrap();
        let g = ProbabilityProfile::uniform(line(&[0, 1]));
        let p = TiltedProposal::around(law, &g, 1e6, 0.5).unwrap();
        let c = p.scales(100.0);
        // boundary edges: φ = |Δg|^{-1} = √2; the flat interior edge is capped
        assert_relative_eq!(c[0], 0.1 * 2f64.sqrt() * std::f64::consts::LN_2, max_relative = 1e-14);
        assert_eq!(c[1], 1.0);
        assert_eq!(c[0], c[2]);
    }

    #[test]
    fn importance_weights_are_exact_density_ratios() {
        let law = TailLaw::new(1.5, 0.7).unwrap();
        let g = ProbabilityProfile::uniform(line(&[0]));
        let p = TiltedProposal::around(law, &g, 1e6, 0.4).unwrap();
        let scales = p.scales(50.0);
        let (f, log_w) = p.draw(&scales, &mut field_rng(3, 9, 0));
        let direct: f64 = f
            .weights()
            .iter()
            .zip(&scales)
            .map(|(&x, &c)| law.log_density(x).unwrap() - (law.log_density(x / c).unwrap() - c.ln()))
            .sum();
        assert_relative_eq!(log_w, direct, max_relative = 1e-12);
    }

    #[test]
    fn importance_sampling_matches_quadrature_single_site() {
        let law = TailLaw::new(1.0, 1.0).unwrap();
        let g = ProbabilityProfile::uniform(line(&[0]));
        let p = TiltedProposal::around(law, &g, 1e6, 0.5).unwrap();
        let exact = annealed_nonexit_quadrature(&law, 1e3).unwrap().estimate;
        let e = p.estimate(1e3, 10_000, 21).unwrap();
        assert!((e.estimate - exact).abs() < 3.0 * e.se, "{e:?} vs {exact}");
        assert!(e.ess.unwrap() > MIN_ESS);
    }

    #[test]
    fn seeded_runs_repeat() {
        let law = TailLaw::new(1.0, 1.0).unwrap();
        let dom = line(&[0, 1]);
        let a = annealed_nonexit_mc(&law, &dom, 2.0, 200, 5).unwrap();
        let b = annealed_nonexit_mc(&law, &dom, 2.0, 200, 5).unwrap();
        assert_eq!(a, b);
    }
}
