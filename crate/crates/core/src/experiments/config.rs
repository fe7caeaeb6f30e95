use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Point};
use crate::error::{Error, Result};
use crate::field::DEFAULT_CAP;
use crate::tail_law::TailLaw;
use crate::variational::SolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    /// `[-half_width, half_width]^d`.
    Box { d: usize, half_width: u32 },
    Sites { d: usize, sites: Vec<Point> },
}

impl DomainSpec {
    pub fn build(&self) -> Result<Arc<Domain>> {
        let dom = match self {
            DomainSpec::Box { d, half_width } => Domain::cube(*d, *half_width)?,
            DomainSpec::Sites { d, sites } => Domain::new(sites, *d)?,
        };
        Ok(Arc::new(dom))
    }

    /// Parses `box<d>d:<half_width>` or `sites<d>d:<points>`, where points are
    /// separated by `;` and coordinates by `,` (in one dimension `,` also
    /// separates points).
    pub fn parse_shorthand(s: &str) -> Result<DomainSpec> {
        let bad = || Error::Config(format!("cannot parse domain `{s}`; try box1d:2 or sites1d:0,1"));
        let (head, body) = s.split_once(':').ok_or_else(bad)?;
        let (kind, d) = if let Some(rest) = head.strip_prefix("box") {
            ("box", rest)
        } else if let Some(rest) = head.strip_prefix("sites") {
            ("sites", rest)
        } else {
            return Err(bad());
        };
        let d: usize = d.strip_suffix('d').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if kind == "box" {
            let half_width = body.trim().parse().map_err(|_| bad())?;
            return Ok(DomainSpec::Box { d, half_width });
        }
        let int = |t: &str| t.trim().parse::<i64>().map_err(|_| bad());
        let sites = if d == 1 && !body.contains(';') {
            body.split(',').map(|t| int(t).map(|x| vec![x])).collect::<Result<Vec<_>>>()?
        } else {
            body.split(';')
                .map(|p| p.split(',').map(int).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?
        };
        Ok(DomainSpec::Sites { d, sites })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub eta: f64,
    #[serde(rename = "D")]
    pub dcoef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsSettings {
    /// Value given to edges of the optimal profile with no gradient.
    #[serde(rename = "cap_M")]
    pub cap_m: f64,
    /// Tilt exponent: proposal medians sit at `t^{-r} φ`. Defaults to `1/(1+η)`.
    pub r: Option<f64>,
}

impl Default for IsSettings {
    fn default() -> Self {
        IsSettings { cap_m: DEFAULT_CAP, r: None }
    }
}

fn default_trials() -> usize {
    1000
}

fn default_paths_per_field() -> usize {
    200
}

fn default_deltas() -> Vec<f64> {
    vec![0.1, 0.2]
}

fn default_times() -> Vec<f64> {
    vec![1.0]
}

fn default_domain() -> DomainSpec {
    DomainSpec::Box { d: 1, half_width: 0 }
}

fn default_law() -> LawSpec {
    LawSpec { eta: 1.0, dcoef: 1.0 }
}

/// Everything an experiment needs; read from JSON and overridden by CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_domain")]
    pub domain: DomainSpec,
    #[serde(default = "default_law")]
    pub law: LawSpec,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    /// Fields (annealed estimators) or paths (single-environment runs).
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub is: IsSettings,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Walk paths per sampled field in the local-time check.
    #[serde(default = "default_paths_per_field")]
    pub paths_per_field: usize,
    /// Radii of the sup-norm balls around `g²` in the local-time check.
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// Target profile `g` for the local-time check; the variational minimizer if absent.
    #[serde(default)]
    pub profile: Option<Vec<f64>>,
    /// Levels for the eigenvalue tail.
    #[serde(default)]
    pub eps: Vec<f64>,
    /// Multipliers `M` for the Laplace-transform check.
    #[serde(default)]
    pub masses: Vec<f64>,
    /// Worker threads; results do not depend on it.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            domain: default_domain(),
            law: default_law(),
            times: default_times(),
            trials: default_trials(),
            is: IsSettings::default(),
            seed: None,
            out: None,
            solver: SolverOptions::default(),
            paths_per_field: default_paths_per_field(),
            deltas: default_deltas(),
            profile: None,
            eps: Vec::new(),
            masses: Vec::new(),
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.law()?;
        self.domain.build()?;
        if self.trials == 0 || self.paths_per_field == 0 {
            return Err(Error::Config("counts must be positive".into()));
        }
        if let Some(&t) = self.times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::Config(format!("time {t} must be finite and nonnegative")));
        }
        if !(self.is.cap_m.is_finite() && self.is.cap_m > 0.0) {
            return Err(Error::Config(format!("cap_M must be positive, got {}", self.is.cap_m)));
        }
        if let Some(r) = self.is.r {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Config(format!("r must be positive, got {r}")));
            }
        }
        if let Some(&d) = self.deltas.iter().find(|d| !(**d > 0.0)) {
            return Err(Error::Config(format!("delta {d} must be positive")));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn law(&self) -> Result<TailLaw> {
        TailLaw::new(self.law.eta, self.law.dcoef)
    }

    /// Tilt exponent `r`, `1/(1+η)` unless set.
    pub fn tilt_exponent(&self) -> f64 {
        self.is.r.unwrap_or(1.0 / (1.0 + self.law.eta))
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("--seed is required for this method".into()))
    }
}
