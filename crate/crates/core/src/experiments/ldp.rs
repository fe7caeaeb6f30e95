//! Annealed probability that the normalised local times stay near `g²`
//! without the walk leaving `B`.
//!
//! Two importance-sampling layers: environments come from the tilted
//! proposal around `φ^(g)`, and for each environment the walk runs in a copy
//! whose boundary conductances are shrunk so that exits become rare; paths
//! are reweighted by the Girsanov density back to the sampled environment.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use super::annealed::{field_rng, rescale, TiltedProposal, STREAM_LDP};
use super::config::ExperimentConfig;
use crate::domain::EdgeKind;
use crate::error::{Error, Result};
use crate::field::ConductanceField;
use crate::path_measure::girsanov_log_density;
use crate::rates::{joint_rate_j, ProbabilityProfile};
use crate::stats::LogMean;
use crate::walk::{local_times, simulate};

/// Boundary conductances of `f` multiplied by `s = min(1, |B| / (t Σ_∂ ω))`,
/// which makes an exit before `t` roughly a unit-rate event.
pub fn boundary_damped(f: &ConductanceField, t: f64) -> ConductanceField {
    let dom = f.domain();
    let boundary: f64 = dom
        .edges()
        .iter()
        .zip(f.weights())
        .filter(|(e, _)| e.kind == EdgeKind::Boundary)
        .map(|(_, w)| w)
        .sum();
    let s = (dom.len() as f64 / (t * boundary)).min(1.0);
    f.map(|k, w| if dom.edges()[k].kind == EdgeKind::Boundary { w * s } else { w })
        .expect("damping keeps weights positive")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LdpRow {
    pub t: f64,
    pub delta: f64,
    pub estimate: f64,
    pub log_estimate: f64,
    pub se: f64,
    /// `t^{-η/(η+1)} log(estimate)`.
    pub rescaled: f64,
    pub ess: f64,
    /// Spread of the rescaled values across the radii at this `t`.
    pub slack: f64,
    /// `rescaled ≥ -J(g²) - slack`.
    pub above_lower_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LdpReport {
    pub profile: Vec<f64>,
    pub measure: Vec<f64>,
    /// `J(g²)`.
    pub j: f64,
    pub fields: usize,
    pub paths_per_field: usize,
    pub rows: Vec<LdpRow>,
}

impl LdpReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,delta,estimate,log_estimate,se,rescaled,minus_j,slack,above_lower_bound,ess")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:e},{},{:e},{},{},{},{},{}",
                r.t,
                r.delta,
                r.estimate,
                r.log_estimate,
                r.se,
                r.rescaled,
                -self.j,
                r.slack,
                r.above_lower_bound,
                r.ess
            )?;
        }
        Ok(())
    }
}

/// Estimates `⟨P_0^ω(‖ℓ_t/t - g²‖_∞ ≤ δ, no exit before t)⟩` for every
/// configured `t` and `δ`.
///
/// `trials` environments are drawn per `t`, each with `paths_per_field`
/// walks. All radii share the same paths.
pub fn ldp_point_check(cfg: &ExperimentConfig, g: &ProbabilityProfile) -> Result<LdpReport> {
    let seed = cfg.require_seed()?;
    let law = cfg.law()?;
    let dom = cfg.domain.build()?;
    if **g.domain() != *dom {
        return Err(Error::DomainMismatch);
    }
    if cfg.deltas.is_empty() || cfg.times.is_empty() {
        return Err(Error::Config("need at least one time and one radius".into()));
    }
    if let Some(&t) = cfg.times.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::NonPositiveArgument(t));
    }
    let proposal = TiltedProposal::around(law, g, cfg.is.cap_m, cfg.tilt_exponent())?;
    let target = g.measure();
    let j = joint_rate_j(g, &law);
    let n_sites = dom.len();
    let mut rows = Vec::new();
    for (ti, &t) in cfg.times.iter().enumerate() {
        let scales = proposal.scales(t);
        // one vector of per-radius log contributions per field
        let per_field = (0..cfg.trials)
            .into_par_iter()
            .map(|k| {
                let mut rng = field_rng(seed, STREAM_LDP, ti * cfg.trials + k);
                let (f, log_w) = proposal.draw(&scales, &mut rng);
                let walk_field = boundary_damped(&f, t);
                let mut sums = vec![0.0; cfg.deltas.len()];
                for _ in 0..cfg.paths_per_field {
                    let path = simulate(&walk_field, t, &mut rng);
                    if path.exited() {
                        continue;
                    }
                    let occ = local_times(&path, n_sites).normalized();
                    let dist = occ.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    let phi = girsanov_log_density(&path, &f, &walk_field)?.exp();
                    for (s, &delta) in sums.iter_mut().zip(&cfg.deltas) {
                        if dist <= delta {
                            *s += phi;
                        }
                    }
                }
                Ok(sums
                    .iter()
                    .map(|s| log_w + (s / cfg.paths_per_field as f64).ln())
                    .collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let mut at_t: Vec<LdpRow> = cfg
            .deltas
            .iter()
            .enumerate()
            .map(|(di, &delta)| {
                let logs: Vec<f64> = per_field.iter().map(|v| v[di]).collect();
                let m = LogMean::from_logs(&logs);
                LdpRow {
                    t,
                    delta,
                    estimate: m.value(),
                    log_estimate: m.log_mean,
                    se: m.se(),
                    rescaled: rescale(t, law.eta(), m.log_mean),
                    ess: m.ess,
                    slack: 0.0,
                    above_lower_bound: false,
                }
            })
            .collect();
        let finite: Vec<f64> = at_t.iter().map(|r| r.rescaled).filter(|r| r.is_finite()).collect();
        let slack = if finite.len() == at_t.len() {
            let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        } else {
            f64::INFINITY
        };
        for r in &mut at_t {
            r.slack = slack;
            r.above_lower_bound = r.rescaled >= -j - slack;
        }
        rows.extend(at_t);
    }
    Ok(LdpReport {
        profile: g.values().to_vec(),
        measure: target,
        j,
        fields: cfg.trials,
        paths_per_field: cfg.paths_per_field,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::annealed::annealed_nonexit_quadrature;
    use crate::experiments::config::DomainSpec;
    use approx::assert_relative_eq;

    fn config(sites: &[i64], times: Vec<f64>, deltas: Vec<f64>) -> ExperimentConfig {
        ExperimentConfig {
            domain: DomainSpec::Sites { d: 1, sites: sites.iter().map(|&x| vec![x]).collect() },
            times,
            deltas,
            trials: 2000,
            paths_per_field: 50,
            seed: Some(17),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn damping_only_touches_the_boundary() {
        let cfg = config(&[0, 1], vec![1.0], vec![1.0]);
        let dom = cfg.domain.build().unwrap();
        let f = ConductanceField::new(dom, vec![2.0, 5.0, 2.0]).unwrap();
        let d = boundary_damped(&f, 10.0);
        assert_eq!(d.weights(), &[0.1, 5.0, 0.1]);
        assert_eq!(boundary_damped(&f, 0.01), f);
    }

    #[test]
    fn full_ball_reproduces_annealed_nonexit() {
        let t = 100.0;
        let cfg = config(&[0], vec![t], vec![1.0]);
        let dom = cfg.domain.build().unwrap();
        let g = ProbabilityProfile::uniform(dom);
        let report = ldp_point_check(&cfg, &g).unwrap();
        let row = report.rows[0];
        let exact = annealed_nonexit_quadrature(&cfg.law().unwrap(), t).unwrap().estimate;
        assert!((row.estimate - exact).abs() < 3.0 * row.se, "{row:?} vs {exact}");
    }

    #[test]
    fn reports_the_joint_rate_of_the_profile() {
        let cfg = config(&[0, 1], vec![5.0], vec![0.1, 0.3]);
        let g = ProbabilityProfile::normalized(cfg.domain.build().unwrap(), &[0.6, 0.8]).unwrap();
        let report = ldp_point_check(&cfg, &g).unwrap();
        assert_relative_eq!(report.j, joint_rate_j(&g, &cfg.law().unwrap()), max_relative = 1e-12);
        assert_eq!(report.rows.len(), 2);
        // the larger ball contains the smaller one path by path
        assert!(report.rows[1].estimate >= report.rows[0].estimate);
    }

    #[test]
    fn rejects_profiles_on_other_domains() {
        let cfg = config(&[0, 1], vec![5.0], vec![0.1]);
        let other = config(&[0], vec![5.0], vec![0.1]).domain.build().unwrap();
        let g = ProbabilityProfile::uniform(other);
        assert_eq!(ldp_point_check(&cfg, &g).unwrap_err(), Error::DomainMismatch);
    }
}
