//! The radial ODE route.
//!
//! With H = 1/2 the metric exponent u(r) of the surface becomes, after
//! v = u − log 2 + ½ log r and x = 4√r, a solution of the radial sinh-Gordon
//! equation v'' + v'/x = 2 sinh 2v, and y = e^v solves Painlevé III with
//! (α, β, γ, δ) = (0, 0, 1, −1). Solutions are seeded from the small-x
//! asymptotics y ≈ −(x/4)(a + 4 log(x/4)) and integrated by an adaptive
//! Taylor series method whose coefficients come from the exact recurrence for
//! exp(±2v). The integrator is generic over [`Real`] so the distinguished
//! (separatrix) solution can be followed in double-double arithmetic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::factor_point;
use crate::loops::LoopConfig;
use crate::precision::{DoubleF64, Real};
use crate::qc_frames::FramePoint;

/// |v| beyond which a trace is declared singular.
pub const V_CAP: f64 = 30.0;
/// Default seed abscissa.
pub const X0_DEFAULT: f64 = 1e-4;
/// Largest seed abscissa accepted.
pub const X0_MAX: f64 = 1e-2;
/// Loosest tolerance accepted.
pub const TOL_MAX: f64 = 1e-6;
/// Default tolerance for extended-precision classification.
pub const CLASSIFY_TOL: f64 = 1e-24;

const SAFETY: f64 = 0.5;

/// One point of the chain r ↦ (x, u, v, y).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformPoint {
    pub r: f64,
    pub x: f64,
    pub u: f64,
    pub v: f64,
    pub y: f64,
}

/// x = 4√r, v = u − log 2 + ½ log r, y = e^v.
pub fn transform_chain(r: f64, u: f64) -> Result<TransformPoint> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::DomainError(format!("r = {r} must be positive")));
    }
    let v = u - std::f64::consts::LN_2 + 0.5 * r.ln();
    Ok(TransformPoint {
        r,
        x: 4.0 * r.sqrt(),
        u,
        v,
        y: v.exp(),
    })
}

/// Inverse of [`transform_chain`]: r = x²/16, u = v + log 2 − ½ log r.
pub fn inverse_chain(x: f64, v: f64) -> Result<TransformPoint> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::DomainError(format!("x = {x} must be positive")));
    }
    let r = x * x / 16.0;
    Ok(TransformPoint {
        r,
        x,
        u: v + std::f64::consts::LN_2 - 0.5 * r.ln(),
        v,
        y: v.exp(),
    })
}

fn seed_log_term<T: Real>(a: T, x0: T) -> Result<T> {
    let x = x0.to_f64();
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::DomainError(format!("seed abscissa {x} must be positive")));
    }
    if x > X0_MAX {
        return Err(Error::SeedOutOfRegime { x0: x, y0: f64::NAN });
    }
    let ell = a + T::from_f64(4.0) * (x0 / T::from_f64(4.0)).ln();
    let y0 = -(x0 * ell) / T::from_f64(4.0);
    if !(y0.to_f64() > 0.0) {
        return Err(Error::SeedOutOfRegime { x0: x, y0: y0.to_f64() });
    }
    Ok(ell)
}

/// Leading-order seed: v₀ = log(−(x₀/4)ℓ), v₀' = 1/x₀ + 4/(x₀ℓ), with
/// ℓ = a + 4 log(x₀/4).
pub fn piii_seed(a: f64, x0: f64) -> Result<(f64, f64)> {
    let ell = seed_log_term(a, x0)?;
    Ok(((-x0 * ell / 4.0).ln(), 1.0 / x0 + 4.0 / (x0 * ell)))
}

/// The seed with the two next corrections x⁴q₁(ℓ) + x⁸q₂(ℓ) of the small-x
/// expansion, accurate to O(x¹²) up to powers of ℓ.
pub fn piii_seed_refined<T: Real>(a: T, x0: T) -> Result<(T, T)> {
    let ell = seed_log_term(a, x0)?;
    let f = T::from_f64;
    let inv = T::one() / ell;
    // q₁ = ℓ²/256 − ℓ/64 + 1/32 − 1/(32ℓ)
    let q1 = ell * ell / f(256.0) - ell / f(64.0) + f(1.0 / 32.0) - inv / f(32.0);
    let dq1 = ell / f(128.0) - f(1.0 / 64.0) + inv * inv / f(32.0);
    // q₂ = ℓ⁴/2¹⁷ − ℓ³/2¹⁴ + 57ℓ²/2¹⁸ − 49ℓ/2¹⁷ + 17/2¹⁷ + 111/(2¹⁸ℓ) − 1/(2¹¹ℓ²)
    let l2 = ell * ell;
    let l3 = l2 * ell;
    let l4 = l3 * ell;
    let q2 = l4 / f(131072.0) - l3 / f(16384.0) + f(57.0) * l2 / f(262144.0)
        - f(49.0) * ell / f(131072.0)
        + f(17.0 / 131072.0)
        + f(111.0) * inv / f(262144.0)
        - inv * inv / f(2048.0);
    let dq2 = l3 / f(32768.0) - f(3.0) * l2 / f(16384.0) + f(57.0) * ell / f(131072.0)
        - f(49.0 / 131072.0)
        - f(111.0) * inv * inv / f(262144.0)
        + inv * inv * inv / f(1024.0);
    let x2 = x0 * x0;
    let x3 = x2 * x0;
    let x4 = x2 * x2;
    let x7 = x4 * x3;
    let v = (-(x0 * ell) / f(4.0)).ln() + x4 * q1 + x4 * x4 * q2;
    let vp = T::one() / x0
        + f(4.0) / (x0 * ell)
        + f(4.0) * x3 * (q1 + dq1)
        + f(4.0) * x7 * (f(2.0) * q2 + dq2);
    Ok((v, vp))
}

/// Which way v escapes at a singular point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SingularKind {
    /// v → +∞ (pole of y).
    VBlowUpPlus,
    /// v → −∞ (zero of y).
    VBlowUpMinus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TraceStatus {
    Smooth { x_max: f64 },
    SingularAt {
        x_s: f64,
        bracket: (f64, f64),
        kind: SingularKind,
    },
}

impl TraceStatus {
    pub fn is_smooth(&self) -> bool {
        matches!(self, TraceStatus::Smooth { .. })
    }

    pub fn singular_x(&self) -> Option<f64> {
        match self {
            TraceStatus::SingularAt { x_s, .. } => Some(*x_s),
            TraceStatus::Smooth { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceNode {
    pub x: f64,
    pub v: f64,
    pub vp: f64,
}

/// One accepted step: v(x_start + s) = Σ coeffs[k] sᵏ for s ∈ [0, h].
#[derive(Clone, Debug)]
struct Segment<T> {
    x: T,
    h: f64,
    coeffs: Vec<T>,
}

/// An integrated trace with dense output.
#[derive(Clone, Debug)]
pub struct PIIITrace<T: Real = f64> {
    pub a: f64,
    pub tol: f64,
    pub order: usize,
    pub nodes: Vec<TraceNode>,
    pub status: TraceStatus,
    segments: Vec<Segment<T>>,
}

impl<T: Real> PIIITrace<T> {
    /// y = e^v at the nodes.
    pub fn y(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.v.exp()).collect()
    }

    pub fn x_end(&self) -> f64 {
        self.nodes.last().map_or(f64::NAN, |n| n.x)
    }

    fn segment_for(&self, x: f64) -> Option<&Segment<T>> {
        let i = self
            .segments
            .partition_point(|s| s.x.to_f64() <= x)
            .checked_sub(1)?;
        let s = &self.segments[i];
        (x <= s.x.to_f64() + s.h * (1.0 + 1e-12)).then_some(s)
    }

    /// (v, v', v'') at `x` from the stored Taylor polynomials.
    pub fn dense(&self, x: f64) -> Option<(f64, f64, f64)> {
        let seg = self.segment_for(x)?;
        let s = T::from_f64(x) - seg.x;
        let (v, vp, vpp) = eval_taylor(&seg.coeffs, s);
        Some((v.to_f64(), vp.to_f64(), vpp.to_f64()))
    }

    /// Residual of y'' = y'²/y − y'/x + y³ − 1/y on the dense output,
    /// divided by e^v·(|v''| + |v'/x| + e^{2v} + e^{−2v}).
    pub fn piii_relative_residual(&self, x: f64) -> Option<f64> {
        let seg = self.segment_for(x)?;
        let s = T::from_f64(x) - seg.x;
        let (v, vp, vpp) = eval_taylor(&seg.coeffs, s);
        let xt = T::from_f64(x);
        let y = v.exp();
        let yp = vp * y;
        let ypp = (vpp + vp * vp) * y;
        let rhs = yp * yp / y - yp / xt + y * y * y - T::one() / y;
        let scale = y * (vpp.abs() + (vp / xt).abs() + y * y + T::one() / (y * y));
        Some(((ypp - rhs) / scale).to_f64().abs())
    }

    /// Largest relative residual over `per_step` interior points of every step.
    pub fn max_piii_residual(&self, per_step: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for seg in &self.segments {
            for j in 1..=per_step {
                let x = seg.x.to_f64() + seg.h * j as f64 / (per_step + 1) as f64;
                if let Some(r) = self.piii_relative_residual(x) {
                    worst = worst.max(r);
                }
            }
        }
        worst
    }

    pub fn step_count(&self) -> usize {
        self.segments.len()
    }
}

fn eval_taylor<T: Real>(c: &[T], s: T) -> (T, T, T) {
    let mut v = T::zero();
    let mut vp = T::zero();
    let mut vpp = T::zero();
    for k in (0..c.len()).rev() {
        v = v * s + c[k];
        if k >= 1 {
            vp = vp * s + c[k] * T::from_usize(k);
        }
        if k >= 2 {
            vpp = vpp * s + c[k] * T::from_usize(k * (k - 1));
        }
    }
    (v, vp, vpp)
}

/// Taylor coefficients v_0..v_order of the solution through (x, v, v').
fn taylor_coeffs<T: Real>(x: T, v: T, vp: T, order: usize) -> (Vec<T>, T, T) {
    let mut c = vec![T::zero(); order + 1];
    let mut e = vec![T::zero(); order + 1];
    let mut f = vec![T::zero(); order + 1];
    let two = T::from_f64(2.0);
    c[0] = v;
    c[1] = vp;
    e[0] = (two * v).exp();
    f[0] = T::one() / e[0];
    for k in 0..order - 1 {
        // E_k and F_k need v_1..v_k
        if k >= 1 {
            let mut se = T::zero();
            let mut sf = T::zero();
            for j in 1..=k {
                let jv = T::from_usize(j) * c[j];
                se += jv * e[k - j];
                sf += jv * f[k - j];
            }
            let kk = T::from_usize(k);
            e[k] = two * se / kk;
            f[k] = -(two * sf) / kk;
        }
        let gk = e[k] - f[k];
        let gk1 = if k >= 1 { e[k - 1] - f[k - 1] } else { T::zero() };
        let k1 = T::from_usize(k + 1);
        c[k + 2] = (x * gk + gk1 - k1 * k1 * c[k + 1]) / (x * T::from_usize((k + 2) * (k + 1)));
    }
    (c, e[0], f[0])
}

/// Taylor order used for a given tolerance.
pub fn taylor_order(tol: f64) -> usize {
    ((-tol.ln() / 2.0).ceil() as i64 + 6).clamp(12, 64) as usize
}

fn check_tol<T: Real>(tol: f64) -> Result<()> {
    let min = T::MIN_TOL;
    if !(tol >= min && tol <= TOL_MAX) {
        return Err(Error::ToleranceUnachievable { tol, min, max: TOL_MAX });
    }
    Ok(())
}

/// Adaptive Taylor integration of v'' + v'/x = 2 sinh 2v from `(x0, v0, v0')`
/// to `x_max`. Steps are sized so the truncation error in v'' stays below
/// `tol` relative to the size of the equation's terms; a trace stops as
/// singular when |v| exceeds [`V_CAP`] or the step size underflows.
pub fn integrate_generic<T: Real>(a: f64, x0: T, seed: (T, T), x_max: f64, tol: f64) -> Result<PIIITrace<T>> {
    check_tol::<T>(tol)?;
    let xs = x0.to_f64();
    if !(xs > 0.0) || !(x_max > xs) {
        return Err(Error::DomainError(format!("span [{xs}, {x_max}] must satisfy 0 < x0 < x_max")));
    }
    let order = taylor_order(tol);
    let mut x = x0;
    let (mut v, mut vp) = seed;
    let mut nodes = vec![TraceNode { x: xs, v: v.to_f64(), vp: vp.to_f64() }];
    let mut segments = Vec::new();
    let finish = |nodes, segments, status| PIIITrace { a, tol, order, nodes, status, segments };

    if v.to_f64().abs() > V_CAP {
        let kind = if v.to_f64() > 0.0 { SingularKind::VBlowUpPlus } else { SingularKind::VBlowUpMinus };
        return Ok(finish(nodes, segments, TraceStatus::SingularAt { x_s: xs, bracket: (xs, xs), kind }));
    }

    loop {
        let xf = x.to_f64();
        let (c, e0, f0) = taylor_coeffs(x, v, vp, order);
        let scale = ((T::from_f64(2.0) * c[2]).abs() + (c[1] / x).abs() + e0.abs() + f0.abs())
            .to_f64()
            .max(1.0);
        let mut h = f64::INFINITY;
        for k in [order - 1, order] {
            let ck = c[k].to_f64().abs() * (k * (k - 1)) as f64;
            if ck > 0.0 {
                h = h.min((tol * scale / ck).powf(1.0 / (k - 2) as f64));
            }
        }
        h *= SAFETY;
        let mut last = false;
        if h >= x_max - xf {
            h = x_max - xf;
            last = true;
        }
        // order K−1 against order K: the dropped term of v''
        loop {
            let err = (c[order].to_f64() * (order * (order - 1)) as f64 * h.powi(order as i32 - 2)).abs();
            if err <= tol * scale || h < 64.0 * f64::EPSILON * xf {
                break;
            }
            h *= 0.5;
            last = false;
        }
        let x_next = if last { T::from_f64(x_max) } else { x + T::from_f64(h) };
        if h < 64.0 * f64::EPSILON * xf || x_next.to_f64() <= xf {
            let kind = if v.to_f64() > 0.0 { SingularKind::VBlowUpPlus } else { SingularKind::VBlowUpMinus };
            let reach = 1.0 / vp.to_f64().abs().max(1e-300);
            let status = TraceStatus::SingularAt {
                x_s: xf + reach.min(1e-8),
                bracket: (xf, xf + 2.0 * reach.min(1e-8)),
                kind,
            };
            return Ok(finish(nodes, segments, status));
        }
        let hs = x_next - x;
        let (v1, vp1, _) = eval_taylor(&c, hs);
        segments.push(Segment { x, h: hs.to_f64(), coeffs: c });
        x = x_next;
        v = v1;
        vp = vp1;
        let (xn, vn, vpn) = (x.to_f64(), v.to_f64(), vp.to_f64());
        nodes.push(TraceNode { x: xn, v: vn, vp: vpn });
        if !vn.is_finite() || vn.abs() > V_CAP {
            let kind = if vn > 0.0 || vn.is_nan() { SingularKind::VBlowUpPlus } else { SingularKind::VBlowUpMinus };
            let reach = 1.0 / vpn.abs();
            let reach = if reach.is_finite() { reach } else { 0.0 };
            let status = TraceStatus::SingularAt {
                x_s: xn + reach,
                bracket: (xn, xn + 2.0 * reach),
                kind,
            };
            return Ok(finish(nodes, segments, status));
        }
        if last {
            return Ok(finish(nodes, segments, TraceStatus::Smooth { x_max }));
        }
    }
}

/// Double-precision integration from a seed `(x0, v0, v0')`.
/// `tol` must lie in [1e−12, 1e−6].
pub fn integrate(a: f64, seed: (f64, f64, f64), x_max: f64, tol: f64) -> Result<PIIITrace<f64>> {
    integrate_generic(a, seed.0, (seed.1, seed.2), x_max, tol)
}

/// Seeds at `x0` from the refined asymptotics and integrates in precision `T`.
pub fn solve_from_seed<T: Real>(a: T, x0: f64, x_max: f64, tol: f64) -> Result<PIIITrace<T>> {
    let x0t = T::from_f64(x0);
    let seed = piii_seed_refined(a, x0t)?;
    integrate_generic(a.to_f64(), x0t, seed, x_max, tol)
}

/// Smooth/singular classification with the seed at `x0`, in double-double
/// arithmetic. `tol` must lie in [1e−28, 1e−6].
pub fn classify_from_x0(a: DoubleF64, x0: f64, x_max: f64, tol: f64) -> Result<TraceStatus> {
    if !(a.to_f64() > 0.0) {
        return Err(Error::DomainError(format!("a = {a} must be positive")));
    }
    Ok(solve_from_seed(a, x0, x_max, tol)?.status)
}

/// Classification with the default seed abscissa 1e−4.
pub fn classify(a: DoubleF64, x_max: f64, tol: f64) -> Result<TraceStatus> {
    classify_from_x0(a, X0_DEFAULT, x_max, tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckRow {
    pub r: f64,
    pub x: f64,
    pub k: f64,
    pub y_loop: f64,
    pub y_ode: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub a: f64,
    pub rows: Vec<CrosscheckRow>,
    pub max_rel_error: f64,
}

/// Compares y(4√r) = k(r)²√r from the loop factorization against the ODE.
pub fn crosscheck(a: f64, r_samples: &[f64], cfg: &LoopConfig, tol: f64) -> Result<CrosscheckReport> {
    if r_samples.is_empty() {
        return Err(Error::DomainError("no radii given".into()));
    }
    if let Some(r) = r_samples.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::DomainError(format!("r = {r} must be positive")));
    }
    let x_of = |r: f64| 4.0 * r.sqrt();
    let x_lo = r_samples.iter().map(|&r| x_of(r)).fold(f64::INFINITY, f64::min);
    let x_hi = r_samples.iter().map(|&r| x_of(r)).fold(0.0f64, f64::max);
    let x0 = X0_DEFAULT.min(0.5 * x_lo);
    let trace = solve_from_seed(a, x0, x_hi, tol)?;
    let ks: Vec<f64> = r_samples
        .par_iter()
        .map(|&r| Ok(factor_point(&FramePoint::polar(r, 0.0, a)?, cfg)?.k))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(r_samples.len());
    for (&r, &k) in r_samples.iter().zip(&ks) {
        let x = x_of(r);
        let y_loop = k * k * r.sqrt();
        let (v, _, _) = trace.dense(x).ok_or_else(|| {
            Error::DomainError(format!("ODE trace stopped at x = {} before x = {x}", trace.x_end()))
        })?;
        let y_ode = v.exp();
        rows.push(CrosscheckRow {
            r,
            x,
            k,
            y_loop,
            y_ode,
            rel_error: ((y_loop - y_ode) / y_ode).abs(),
        });
    }
    let max_rel_error = rows.iter().fold(0.0f64, |m, r| m.max(r.rel_error));
    Ok(CrosscheckReport { a, rows, max_rel_error })
}
