//! Adaptive Gauss–Kronrod quadrature and log-domain integration.
//!
//! The annealed quantities of interest are Laplace transforms evaluated at
//! arguments where the integrals are far below `f64::MIN_POSITIVE`, so the
//! integrators here work with `log` of the integrand, factor out its maximum,
//! and return the logarithm of the integral.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_DEPTH: u32 = 50;

/// One 15-point Kronrod panel; returns (estimate, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: (f64, f64),
    abs_tol: f64,
    rel_tol: f64,
    depth: u32,
) -> Result<f64> {
    let (est, err) = whole;
    if !est.is_finite() {
        return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
    }
    if err <= abs_tol.max(rel_tol * est.abs()) || (b - a) <= f64::EPSILON * a.abs().max(b.abs()) {
        return Ok(est);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Quadrature(format!(
            "subdivision limit reached on [{a}, {b}] (error {err:e})"
        )));
    }
    let m = 0.5 * (a + b);
    let left = gk15(f, a, m);
    let right = gk15(f, m, b);
    Ok(adapt(f, a, m, left, 0.5 * abs_tol, rel_tol, depth + 1)?
        + adapt(f, m, b, right, 0.5 * abs_tol, rel_tol, depth + 1)?)
}

/// Adaptive Gauss–Kronrod integral of `f` over a finite interval.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Quadrature("integration limits must be finite".into()));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let first = gk15(&f, lo, hi);
    Ok(sign * adapt(&f, lo, hi, first, abs_tol, rel_tol, 0)?)
}

fn clean(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// `log ∫_a^b exp(log_f(x)) dx` for a log-integrand that is unimodal on
/// `[a, b]` (or at least has its mass resolved by a 256-panel grid).
///
/// NaN values of `log_f` are treated as `-inf`. The result is `-inf` when the
/// integrand vanishes everywhere on the grid.
pub fn log_integrate<F: Fn(f64) -> f64>(log_f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    const PANELS: usize = 256;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Quadrature(format!("bad interval [{a}, {b}]")));
    }
    let g = |x: f64| clean(log_f(x));
    let width = (b - a) / PANELS as f64;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for k in 0..PANELS {
        let x = a + (k as f64 + 0.5) * width;
        let v = g(x);
        if v > best.0 {
            best = (v, k);
        }
    }
    if best.0 == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    // sharpen the maximum inside the neighbouring panels by golden-section search
    let lo = a + (best.1 as f64 - 1.0).max(0.0) * width;
    let hi = (a + (best.1 as f64 + 2.0) * width).min(b);
    let peak = golden_max(&g, lo, hi, 200).1.max(best.0);
    let shifted = |x: f64| (g(x) - peak).exp();
    let mut total = 0.0;
    for k in 0..PANELS {
        let pa = a + k as f64 * width;
        let pb = if k + 1 == PANELS { b } else { a + (k + 1) as f64 * width };
        total += integrate(shifted, pa, pb, 1e-300, rel_tol)?;
    }
    Ok(peak + total.ln())
}

/// `log ∫ exp(h(u)) du` over the real line for a strictly concave `h`
/// with derivative `dh`. The integration range is cut where `h` drops
/// 745 below its maximum (where `exp` underflows).
pub fn log_integrate_concave<H, DH>(h: H, dh: DH, guess: f64, rel_tol: f64) -> Result<f64>
where
    H: Fn(f64) -> f64,
    DH: Fn(f64) -> f64,
{
    let mode = find_root_decreasing(&dh, guess)?;
    let top = h(mode);
    if !top.is_finite() {
        return Err(Error::Quadrature(format!("log-integrand not finite at its mode {mode}")));
    }
    const DROP: f64 = 745.0;
    let mut step = 1.0;
    let mut lo = mode - step;
    while h(lo) > top - DROP {
        step *= 2.0;
        lo = mode - step;
        if step > 1e6 {
            return Err(Error::Quadrature("left tail does not decay".into()));
        }
    }
    step = 1.0;
    let mut hi = mode + step;
    while h(hi) > top - DROP {
        step *= 2.0;
        hi = mode + step;
        if step > 1e6 {
            return Err(Error::Quadrature("right tail does not decay".into()));
        }
    }
    // split at the mode so the peak lies on a panel boundary
    let shifted = |u: f64| clean(h(u) - top).exp();
    let mut total = 0.0;
    for (a, b) in [(lo, mode), (mode, hi)] {
        const PANELS: usize = 128;
        let w = (b - a) / PANELS as f64;
        for k in 0..PANELS {
            let pa = a + k as f64 * w;
            let pb = if k + 1 == PANELS { b } else { a + (k + 1) as f64 * w };
            total += integrate(shifted, pa, pb, 1e-300, rel_tol)?;
        }
    }
    Ok(top + total.ln())
}

/// Root of a strictly decreasing function by bracket expansion and bisection.
pub fn find_root_decreasing<F: Fn(f64) -> f64>(f: &F, guess: f64) -> Result<f64> {
    let mut lo = guess;
    let mut hi = guess;
    let mut step = 1.0;
    while !(f(lo) > 0.0) {
        lo -= step;
        step *= 2.0;
        if step > 1e8 {
            return Err(Error::Quadrature("cannot bracket root from the left".into()));
        }
    }
    step = 1.0;
    while !(f(hi) < 0.0) {
        hi += step;
        step *= 2.0;
        if step > 1e8 {
            return Err(Error::Quadrature("cannot bracket root from the right".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section search for the maximum of `f` on `[a, b]`; returns (argmax, max).
pub fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
