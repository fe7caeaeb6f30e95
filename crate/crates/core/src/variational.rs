//! The variational constant `L_η(B) = inf_{g² ∈ M_1(B)} Σ_{E_B} |g(y) - g(x)|^p`,
//! `p = 2η/(η+1)`.
//!
//! [`solve_l`] runs multi-start projected gradient descent on the nonnegative
//! part of the unit sphere, with `|u|^p` smoothed to `(u² + κ²)^{p/2}` and `κ`
//! driven down a geometric schedule. [`brute_force_l`] searches a grid in
//! spherical angles and certifies the solver on domains of up to four sites.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Endpoint};
use crate::error::{Error, Result};
use crate::rates::{difference_exponent, difference_sum, ProbabilityProfile};

/// Largest domain accepted by [`brute_force_l`].
pub const BRUTE_FORCE_MAX_SITES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Random starts; the uniform profile is always tried in addition.
    pub restarts: usize,
    pub kappa_start: f64,
    pub kappa_min: f64,
    /// Factor applied to `κ` between continuation stages.
    pub kappa_factor: f64,
    /// Iteration cap per continuation stage.
    pub max_iterations: usize,
    /// Relative decrease below which a stage is considered stationary.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            restarts: 32,
            kappa_start: 0.5,
            kappa_min: 1e-10,
            kappa_factor: 0.1,
            max_iterations: 5000,
            tolerance: 1e-13,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub final_kappa: f64,
    pub restarts: usize,
    /// Restarts whose last stage met the stationarity tolerance.
    pub converged_restarts: usize,
    /// Objective evaluations (grid points for the brute-force search).
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalResult {
    pub minimizer: ProbabilityProfile,
    pub value: f64,
    /// Distinct profiles found at the optimal value, `minimizer` first.
    pub minimizers: Vec<ProbabilityProfile>,
    pub diagnostics: SolverDiagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariationalDoc {
    pub eta: f64,
    pub value: f64,
    pub minimizer: Vec<f64>,
    pub minimizers: Vec<Vec<f64>>,
    pub sites: Vec<Vec<i64>>,
    pub diagnostics: SolverDiagnostics,
}

impl VariationalResult {
    pub fn to_doc(&self, eta: f64) -> VariationalDoc {
        VariationalDoc {
            eta,
            value: self.value,
            minimizer: self.minimizer.values().to_vec(),
            minimizers: self.minimizers.iter().map(|g| g.values().to_vec()).collect(),
            sites: self.minimizer.domain().sites().to_vec(),
            diagnostics: self.diagnostics.clone(),
        }
    }
}

/// `Σ_{E_B} |g(y) - g(x)|^{2η/(η+1)}`.
pub fn objective(g: &ProbabilityProfile, eta: f64) -> f64 {
    difference_sum(g, eta)
}

/// Edge endpoints as site indices, `None` for exterior points.
struct EdgeTable {
    ends: Vec<(Option<usize>, Option<usize>)>,
    n: usize,
}

impl EdgeTable {
    fn new(dom: &Domain) -> Self {
        let idx = |e: &Endpoint| match e {
            Endpoint::Site(i) => Some(*i),
            Endpoint::Exterior(_) => None,
        };
        EdgeTable {
            ends: dom.edges().iter().map(|e| (idx(&e.a), idx(&e.b))).collect(),
            n: dom.len(),
        }
    }

    fn diff(&self, g: &[f64], k: usize) -> f64 {
        let (a, b) = self.ends[k];
        a.map_or(0.0, |i| g[i]) - b.map_or(0.0, |j| g[j])
    }

    fn value(&self, g: &[f64], p: f64) -> f64 {
        (0..self.ends.len()).map(|k| self.diff(g, k).abs().powf(p)).sum()
    }

    fn smoothed(&self, g: &[f64], p: f64, kappa: f64) -> f64 {
        let k2 = kappa * kappa;
        (0..self.ends.len())
            .map(|k| {
                let u = self.diff(g, k);
                (u * u + k2).powf(0.5 * p)
            })
            .sum()
    }

    fn smoothed_grad(&self, g: &[f64], p: f64, kappa: f64) -> Vec<f64> {
        let k2 = kappa * kappa;
        let mut grad = vec![0.0; self.n];
        for k in 0..self.ends.len() {
            let u = self.diff(g, k);
            let c = p * (u * u + k2).powf(0.5 * p - 1.0) * u;
            let (a, b) = self.ends[k];
            if let Some(i) = a {
                grad[i] += c;
            }
            if let Some(j) = b {
                grad[j] -= c;
            }
        }
        grad
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

fn from_angles(angles: &[f64], out: &mut [f64]) {
    let mut prod = 1.0;
    for (k, &a) in angles.iter().enumerate() {
        out[k] = prod * a.cos();
        prod *= a.sin();
    }
    out[angles.len()] = prod;
}

/// Exhaustive search over the spherical-angle grid with
/// `grid_points_per_axis` points per angle in `[0, π/2]`, followed by
/// successive local grid refinement around the best point.
pub fn brute_force_l(dom: &Arc<Domain>, eta: f64, grid_points_per_axis: usize) -> Result<VariationalResult> {
    let n = dom.len();
    if n > BRUTE_FORCE_MAX_SITES {
        return Err(Error::DomainTooLarge { sites: n, max: BRUTE_FORCE_MAX_SITES });
    }
    if grid_points_per_axis < 100 {
        return Err(Error::Config(format!(
            "brute force needs at least 100 grid points per angle, got {grid_points_per_axis}"
        )));
    }
    let p = difference_exponent(eta);
    let table = EdgeTable::new(dom);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let k = n - 1;
    let mut g = vec![0.0; n];
    let mut evaluations = 0usize;

    let eval = |angles: &[f64], g: &mut [f64], evaluations: &mut usize| {
        from_angles(angles, g);
        *evaluations += 1;
        table.value(g, p)
    };

    let mut best_angles = vec![0.0; k];
    let mut best = eval(&best_angles, &mut g, &mut evaluations);
    if k > 0 {
        let m = grid_points_per_axis;
        let step = half_pi / (m - 1) as f64;
        let mut idx = vec![0usize; k];
        let mut angles = vec![0.0; k];
        'grid: loop {
            for (a, &i) in angles.iter_mut().zip(&idx) {
                *a = i as f64 * step;
            }
            let v = eval(&angles, &mut g, &mut evaluations);
            if v < best {
                best = v;
                best_angles.copy_from_slice(&angles);
            }
            for pos in 0..k {
                idx[pos] += 1;
                if idx[pos] < m {
                    continue 'grid;
                }
                idx[pos] = 0;
            }
            break;
        }

        // zoom: an 11-point local grid per angle, halving the window each level
        let mut half = step;
        let local = 11usize;
        for _ in 0..80 {
            let centre = best_angles.clone();
            let mut li = vec![0usize; k];
            'zoom: loop {
                for d in 0..k {
                    let offset = -half + 2.0 * half * li[d] as f64 / (local - 1) as f64;
                    angles[d] = (centre[d] + offset).clamp(0.0, half_pi);
                }
                let v = eval(&angles, &mut g, &mut evaluations);
                if v < best {
                    best = v;
                    best_angles.copy_from_slice(&angles);
                }
                for pos in 0..k {
                    li[pos] += 1;
                    if li[pos] < local {
                        continue 'zoom;
                    }
                    li[pos] = 0;
                }
                break;
            }
            half *= 0.5;
            if half < 1e-15 {
                break;
            }
        }
    }
    from_angles(&best_angles, &mut g);
    let minimizer = ProbabilityProfile::normalized(dom.clone(), &g)?;
    let value = objective(&minimizer, eta);
    Ok(VariationalResult {
        minimizers: vec![minimizer.clone()],
        minimizer,
        value,
        diagnostics: SolverDiagnostics {
            iterations: 0,
            final_kappa: 0.0,
            restarts: 0,
            converged_restarts: 0,
            evaluations,
        },
    })
}

struct RestartOutcome {
    profile: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
    evaluations: usize,
}

fn descend(table: &EdgeTable, start: Vec<f64>, p: f64, opts: &SolverOptions) -> RestartOutcome {
    let mut g = start;
    let mut best_true = (table.value(&g, p), g.clone());
    let mut iterations = 0;
    let mut evaluations = 1;
    let mut converged;
    let mut kappa = opts.kappa_start;
    loop {
        let mut step = 1e-2;
        let mut f = table.smoothed(&g, p, kappa);
        converged = false;
        for _ in 0..opts.max_iterations {
            iterations += 1;
            let grad = table.smoothed_grad(&g, p, kappa);
            let mut accepted = false;
            while step > 1e-300 {
                let mut trial: Vec<f64> = g.iter().zip(&grad).map(|(x, d)| (x - step * d).max(0.0)).collect();
                if normalize(&mut trial) {
                    let ft = table.smoothed(&trial, p, kappa);
                    evaluations += 1;
                    if ft < f {
                        let decrease = f - ft;
                        g = trial;
                        f = ft;
                        accepted = true;
                        step *= 2.0;
                        if decrease <= opts.tolerance * f.abs().max(1e-300) {
                            converged = true;
                        }
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                converged = true;
            }
            if converged {
                break;
            }
        }
        let v = table.value(&g, p);
        evaluations += 1;
        if v < best_true.0 {
            best_true = (v, g.clone());
        }
        if kappa <= opts.kappa_min {
            break;
        }
        kappa = (kappa * opts.kappa_factor).max(opts.kappa_min);
    }
    let (value, profile) = polish(table, best_true.1, p);
    RestartOutcome { profile, value, iterations, converged, evaluations }
}

// Merges near-equal entries and zeroes near-zero ones when that lowers the
// nonsmooth objective; the minimisers often sit exactly on such kinks.
fn polish(table: &EdgeTable, g: Vec<f64>, p: f64) -> (f64, Vec<f64>) {
    let mut best = (table.value(&g, p), g);
    for tol in [1e-9, 1e-7, 1e-5, 1e-4] {
        let mut cand = best.1.clone();
        for x in cand.iter_mut() {
            if *x < tol {
                *x = 0.0;
            }
        }
        let n = cand.len();
        let mut group: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for j in 0..i {
                if (cand[i] - cand[j]).abs() < tol {
                    group[i] = group[j];
                    break;
                }
            }
        }
        let mut merged = cand.clone();
        for i in 0..n {
            let members: Vec<usize> = (0..n).filter(|&j| group[j] == group[i]).collect();
            merged[i] = members.iter().map(|&j| cand[j]).sum::<f64>() / members.len() as f64;
        }
        if normalize(&mut merged) {
            let v = table.value(&merged, p);
            if v < best.0 {
                best = (v, merged);
            }
        }
    }
    best
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Multi-start smoothed projected gradient descent for `L_η(B)`.
pub fn solve_l(dom: &Arc<Domain>, eta: f64, opts: &SolverOptions) -> Result<VariationalResult> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidLaw { eta, dcoef: 1.0 });
    }
    let n = dom.len();
    let p = difference_exponent(eta);
    let table = EdgeTable::new(dom);

    let mut starts = vec![vec![1.0 / (n as f64).sqrt(); n]];
    for r in 0..opts.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(r as u64 + 1);
        let mut v: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();
        normalize(&mut v);
        starts.push(v);
    }
    let outcomes: Vec<RestartOutcome> = starts
        .into_par_iter()
        .map(|s| descend(&table, s, p, opts))
        .collect();

    let iterations = outcomes.iter().map(|o| o.iterations).sum();
    let evaluations = outcomes.iter().map(|o| o.evaluations).sum();
    let converged_restarts = outcomes.iter().filter(|o| o.converged).count();
    let diagnostics = SolverDiagnostics {
        iterations,
        final_kappa: opts.kappa_min,
        restarts: outcomes.len(),
        converged_restarts,
        evaluations,
    };
    if converged_restarts == 0 {
        return Err(Error::NonConvergence {
            iterations,
            detail: format!("no restart became stationary ({diagnostics:?})"),
        });
    }

    let best_value = outcomes.iter().map(|o| o.value).fold(f64::INFINITY, f64::min);
    let tie = 1e-10 * best_value.abs().max(1.0);
    let mut tied: Vec<&RestartOutcome> = outcomes.iter().filter(|o| o.value <= best_value + tie).collect();
    // lexicographically largest profile first
    tied.sort_by(|a, b| lex_cmp(&b.profile, &a.profile));
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    for o in tied {
        let fresh = distinct.iter().all(|d| {
            d.iter().zip(&o.profile).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() > 1e-6
        });
        if fresh {
            distinct.push(o.profile.clone());
        }
    }
    let minimizers = distinct
        .iter()
        .map(|v| ProbabilityProfile::normalized(dom.clone(), v))
        .collect::<Result<Vec<_>>>()?;
    let minimizer = minimizers[0].clone();
    let value = objective(&minimizer, eta);
    Ok(VariationalResult { minimizer, value, minimizers, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Point;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn line(points: &[i64]) -> Arc<Domain> {
        let pts: Vec<Point> = points.iter().map(|&p| vec![p]).collect();
        Arc::new(Domain::new(&pts, 1).unwrap())
    }

    #[test]
    fn objective_examples() {
        let single = ProbabilityProfile::new(line(&[0]), vec![1.0]).unwrap();
        for eta in [0.3, 1.0, 5.0] {
            assert_relative_eq!(objective(&single, eta), 2.0);
        }
        let d2 = ProbabilityProfile::new(Arc::new(Domain::new(&[vec![0, 0]], 2).unwrap()), vec![1.0]).unwrap();
        assert_relative_eq!(objective(&d2, 1.0), 4.0);
        let u = ProbabilityProfile::uniform(line(&[0, 1]));
        assert_relative_eq!(objective(&u, 1.0), 2f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn brute_force_small_cases() {
        let r = brute_force_l(&line(&[0]), 0.7, 100).unwrap();
        assert_eq!(r.value, 2.0);
        assert_eq!(r.minimizer.values(), &[1.0]);
        let r = brute_force_l(&line(&[0, 1]), 1.0, 100).unwrap();
        assert!((r.value - 2f64.sqrt()).abs() < 1e-3);
        let r = brute_force_l(&Arc::new(Domain::new(&[vec![0, 0]], 2).unwrap()), 1.0, 100).unwrap();
        assert_eq!(r.value, 4.0);
        assert!(matches!(brute_force_l(&line(&[0, 1, 2, 3, 4]), 1.0, 100), Err(Error::DomainTooLarge { .. })));
        assert!(brute_force_l(&line(&[0]), 1.0, 10).is_err());
    }

    #[test]
    fn solver_small_cases() {
        let opts = SolverOptions::default();
        let r = solve_l(&line(&[0]), 1.0, &opts).unwrap();
        assert!((r.value - 2.0).abs() < 1e-6);
        let r = solve_l(&line(&[0, 1]), 1.0, &opts).unwrap();
        assert!((r.value - 2f64.sqrt()).abs() < 1e-3);
        assert!((r.value - objective(&r.minimizer, 1.0)).abs() < 1e-9);
        // 3 sites, eta = 2: minimiser is not uniform (reference 0.9573702906 by Nelder–Mead)
        let r = solve_l(&line(&[0, 1, 2]), 2.0, &opts).unwrap();
        assert!((r.value - 0.957_370_290_611_543_6).abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn solver_is_deterministic() {
        let opts = SolverOptions { restarts: 8, ..SolverOptions::default() };
        let a = solve_l(&line(&[-1, 0, 1]), 0.5, &opts).unwrap();
        let b = solve_l(&line(&[-1, 0, 1]), 0.5, &opts).unwrap();
        assert_eq!(a.minimizer, b.minimizer);
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn l_is_below_uniform_objective() {
        let dom = Arc::new(Domain::cube(2, 1).unwrap());
        for eta in [0.5, 1.0, 2.0] {
            let opts = SolverOptions { restarts: 4, ..SolverOptions::default() };
            let r = solve_l(&dom, eta, &opts).unwrap();
            let u = objective(&ProbabilityProfile::uniform(dom.clone()), eta);
            assert!(r.value > 0.0 && r.value <= u + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn absolute_values_never_hurt(raw in proptest::collection::vec(-1.0f64..1.0, 3), eta in 0.2f64..4.0) {
            let dom = line(&[-1, 0, 1]);
            let p = difference_exponent(eta);
            let table = EdgeTable::new(&dom);
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-3);
            let signed: Vec<f64> = raw.iter().map(|x| x / norm).collect();
            let abs: Vec<f64> = signed.iter().map(|x| x.abs()).collect();
            prop_assert!(table.value(&abs, p) <= table.value(&signed, p) + 1e-12);
        }
    }
}
