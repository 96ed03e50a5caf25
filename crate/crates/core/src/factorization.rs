//! Birkhoff and SU(1,1) Iwasawa factorization of truncated loops.
//!
//! `birkhoff` solves for `Y₊ = X₊⁻¹` of degree `d` from the block Toeplitz
//! conditions `[X·Y₊]_k = 0` (k = 1..hi+d) and `[X·Y₊]_0 = I`, in the least
//! squares sense. `iwasawa_su11` applies it to `X = C(L)⁻¹L`, which equals
//! `±C(B)⁻¹B`, and reads the orbit off the sign of the constant term.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loops::{c, max_abs, real_mat, LoopConfig, Mat2, TruncatedLoop};
use crate::qc_frames::model_e;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Condition number above which a factorization is treated as off the big cell.
pub const MAX_CONDITION: f64 = 1e12;
/// Largest |C(F)⁻¹F − I| accepted before `NonRealResult` is raised.
pub const REALITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct BirkhoffFactors {
    pub x_minus: TruncatedLoop,
    pub x_plus: TruncatedLoop,
    /// `Y₊ = X₊⁻¹` as solved for.
    pub y_plus: TruncatedLoop,
    pub residual: f64,
    pub condition: f64,
}

/// Which open SU(1,1) orbit the loop lies in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orbit {
    Identity,
    W,
}

impl Orbit {
    /// The fixed representative: I or w = [[0, λ], [−1/λ, 0]].
    pub fn representative(self) -> TruncatedLoop {
        match self {
            Orbit::Identity => TruncatedLoop::identity(),
            Orbit::W => TruncatedLoop::w(),
        }
    }

    /// Sign ±1 with C(w)⁻¹w = ±I.
    pub fn sign(self) -> f64 {
        match self {
            Orbit::Identity => 1.0,
            Orbit::W => -1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IwasawaFactors {
    pub f: TruncatedLoop,
    pub orbit: Orbit,
    pub b: TruncatedLoop,
    pub k: f64,
    pub diagnostics: IwasawaDiagnostics,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IwasawaDiagnostics {
    /// Least-squares residual of the Birkhoff system.
    pub residual: f64,
    pub condition: f64,
    /// sup |C(F)⁻¹F − I| on the circle.
    pub reality_defect: f64,
    /// sup |F·w·B − L| on the circle.
    pub reconstruction: f64,
    pub degree: usize,
}

fn block_system(x: &TruncatedLoop, d: usize) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let hi = x.hi().max(0) as usize;
    let rows = hi + d + 1;
    let mut m = DMatrix::from_element(2 * rows, 2 * (d + 1), ZERO);
    for k in 0..rows {
        for j in 0..=d {
            let blk = x.coeff(k as i32 - j as i32);
            if blk == Mat2::zeros() {
                continue;
            }
            m.fixed_view_mut::<2, 2>(2 * k, 2 * j).copy_from(&blk);
        }
    }
    let mut rhs = DMatrix::from_element(2 * rows, 2, ZERO);
    rhs[(0, 0)] = c(1.0, 0.0);
    rhs[(1, 1)] = c(1.0, 0.0);
    (m, rhs)
}

/// Birkhoff factorization `X = X₋·X₊` with `X₋(∞) = I`, using `Y₊` of
/// degree `d`.
pub fn birkhoff_with_degree(x: &TruncatedLoop, d: usize, cfg: &LoopConfig) -> Result<BirkhoffFactors> {
    let (m, rhs) = block_system(x, d);
    let svd = m.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::OffBigCell {
            residual: f64::NAN,
            condition,
        });
    }
    let sol = svd
        .solve(&rhs, smax * f64::EPSILON)
        .map_err(|e| Error::DomainError(e.to_string()))?;
    let residual = (&m * &sol - &rhs).iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let y_plus = TruncatedLoop::new(
        0,
        (0..=d)
            .map(|j| sol.fixed_view::<2, 2>(2 * j, 0).into_owned())
            .collect(),
    );
    if !(residual <= cfg.tol_residual) {
        return Err(Error::OffBigCell { residual, condition });
    }
    let prod = x.compose(&y_plus);
    let x_minus = TruncatedLoop::new(prod.lo(), (prod.lo()..=0).map(|k| prod.coeff(k)).collect());
    let x_plus = y_plus.adjugate();
    Ok(BirkhoffFactors {
        x_minus,
        x_plus,
        y_plus,
        residual,
        condition,
    })
}

/// Birkhoff factorization at the configured degree, retried once at twice
/// the degree when the residual test fails.
pub fn birkhoff(x: &TruncatedLoop, cfg: &LoopConfig) -> Result<BirkhoffFactors> {
    match birkhoff_with_degree(x, cfg.degree, cfg) {
        Err(Error::OffBigCell { residual, .. }) if residual.is_finite() => {
            birkhoff_with_degree(x, 2 * cfg.degree, cfg)
        }
        other => other,
    }
}

/// Iwasawa factorization `L = F·w·B` with `F` in ΛSU(1,1)_σ, `w ∈ {I, w}`,
/// and `B` in Λ₊ with constant term diag(k, 1/k), k > 0.
pub fn iwasawa_su11(l: &TruncatedLoop, cfg: &LoopConfig) -> Result<IwasawaFactors> {
    let defect = l.twist_defect();
    if defect > cfg.tol_residual {
        return Err(Error::NotTwisted { defect });
    }
    let x = l.c_inverse().compose(l);
    let bf = match birkhoff_with_degree(&x, cfg.degree, cfg) {
        Err(Error::OffBigCell { residual, .. }) if residual.is_finite() => {
            birkhoff_with_degree(&x, 2 * cfg.degree, cfg)?
        }
        other => other?,
    };
    let degree = bf.y_plus.hi() as usize;
    let y0 = bf.y_plus.coeff(0);
    let det0 = y0.determinant();
    // constant term of X₊ = Y₀⁻¹
    let s = (y0[(1, 1)] / det0).re;
    if s == 0.0 || !s.is_finite() {
        return Err(Error::OffBigCell {
            residual: bf.residual,
            condition: bf.condition,
        });
    }
    let orbit = if s > 0.0 { Orbit::Identity } else { Orbit::W };
    let sign = orbit.sign();
    let k = s.abs().sqrt();

    let b = bf
        .y_plus
        .adjugate()
        .left_mul_const(&real_mat(sign / k, 0.0, 0.0, sign * k));
    let mut f = l
        .compose(&bf.y_plus)
        .right_mul_const(&real_mat(k, 0.0, 0.0, 1.0 / k));
    if orbit == Orbit::W {
        f = f.compose(&TruncatedLoop::w());
    }
    let f = f.trimmed(0.0);

    let n = f.min_samples().max(cfg.sample_count);
    let reality_defect = (f.c_inverse().compose(&f) - TruncatedLoop::identity()).sup_norm(n);
    let rebuilt = f.compose(&orbit.representative()).compose(&b);
    let reconstruction = (&rebuilt - l).sup_norm(n);
    if !(reality_defect <= REALITY_TOL) {
        return Err(Error::NonRealResult {
            defect: reality_defect,
        });
    }
    Ok(IwasawaFactors {
        f,
        orbit,
        b,
        k,
        diagnostics: IwasawaDiagnostics {
            residual: bf.residual,
            condition: bf.condition,
            reality_defect,
            reconstruction,
            degree,
        },
    })
}

/// Closed-form factorization of the model frame E(a, t) for a > 0, with
/// m = a + t + t̄: orbit I and B = [[√m, λ/√m], [0, 1/√m]] when m > 0, orbit
/// w and B = [[√−m, −λ/√−m], [0, 1/√−m]] when m < 0.
pub fn model_iwasawa(a: f64, t: Complex64) -> Result<IwasawaFactors> {
    let e = model_e(a, t)?;
    let m = a + 2.0 * t.re;
    if m.abs() <= 1e-14 * (1.0 + a.abs()) {
        return Err(Error::OrbitBoundary { value: m });
    }
    let (orbit, sign) = if m > 0.0 { (Orbit::Identity, 1.0) } else { (Orbit::W, -1.0) };
    let k = m.abs().sqrt();
    let b = TruncatedLoop::from_terms([
        (0, real_mat(k, 0.0, 0.0, 1.0 / k)),
        (1, real_mat(0.0, sign / k, 0.0, 0.0)),
    ]);
    // F = E·B⁻¹·w⁻¹, w⁻¹ = −w
    let mut f = e.compose(&b.adjugate());
    if orbit == Orbit::W {
        f = f.compose(&TruncatedLoop::w()).scale(c(-1.0, 0.0));
    }
    Ok(IwasawaFactors {
        f: f.trimmed(0.0),
        orbit,
        b,
        k,
        diagnostics: IwasawaDiagnostics {
            degree: 1,
            condition: 1.0,
            ..Default::default()
        },
    })
}

/// Largest coefficient-entry difference between two `B` factors.
pub fn b_distance(x: &IwasawaFactors, y: &IwasawaFactors) -> f64 {
    x.b.coeff_distance(&y.b)
}

/// Max entry of `B(ε²z, ελ) − d(ε)⁻¹B(z, λ)d(ε)` over coefficients, given
/// `B` at both points.
pub fn homogeneity_defect(b_z: &TruncatedLoop, b_eps: &TruncatedLoop, eps: Complex64) -> f64 {
    let d = crate::qc_frames::d_eps(eps);
    let d_inv = crate::qc_frames::d_eps(c(1.0, 0.0) / eps);
    let lhs = b_eps.rescale_lambda(eps);
    let rhs = b_z.left_mul_const(&d_inv).right_mul_const(&d);
    lhs.coeff_distance(&rhs)
}

/// Sup-norm distance on the circle between two matrices of loops.
pub fn max_entry(m: &Mat2) -> f64 {
    max_abs(m)
}
