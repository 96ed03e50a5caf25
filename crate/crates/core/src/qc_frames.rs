//! Frames built from the quantum differential equation of the projective
//! line: the Frobenius series f₀, f₁, the normalized solution L₀, the
//! holomorphic frame L = e^{tN/λ}L₀, the dressing loop γ₀(a), and the model
//! data E = γ₀⁻¹e^{tN/λ}, Z = C(E)⁻¹E.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::loops::{c, mat, real_mat, Mat2, TruncatedLoop};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Cutoff for the z-series tail `|z|^i / (i!)²`.
pub const SERIES_TAIL: f64 = 1e-16;
/// Hard cap on the number of z-series terms.
pub const MAX_Z_TERMS: usize = 64;

/// Number of series terms kept: the smallest `i` with `|z|^i/(i!)² < 1e-16`
/// (terms `0..i` are summed), capped at 64.
pub fn z_terms_for(z: Complex64) -> usize {
    let r = z.norm();
    let mut term = 1.0;
    for i in 1..MAX_Z_TERMS {
        term *= r / (i * i) as f64;
        if term < SERIES_TAIL {
            return i;
        }
    }
    MAX_Z_TERMS
}

/// A domain point. `t` is the primitive coordinate; `z = e^t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FramePoint {
    pub t: Complex64,
    pub z: Complex64,
    pub a: f64,
    pub z_terms: usize,
}

impl FramePoint {
    /// Uses the principal logarithm, so `Im t ∈ (−π, π]`.
    pub fn new(z: Complex64, a: f64) -> Result<Self> {
        if z == ZERO || !z.is_finite() {
            return Err(Error::DomainError(format!("z = {z} is not in C*")));
        }
        Self::from_t(z.ln(), a)
    }

    pub fn from_t(t: Complex64, a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::DomainError(format!("a = {a} must be positive")));
        }
        if !t.is_finite() || t.im <= -std::f64::consts::PI || t.im > std::f64::consts::PI {
            return Err(Error::DomainError(format!("t = {t} is off the principal strip")));
        }
        let z = t.exp();
        Ok(FramePoint {
            t,
            z,
            a,
            z_terms: z_terms_for(z),
        })
    }

    /// Polar constructor, `θ ∈ (−π, π]`.
    pub fn polar(r: f64, theta: f64, a: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::DomainError(format!("r = {r} must be positive")));
        }
        Self::from_t(c(r.ln(), theta), a)
    }
}

/// Scalar Laurent polynomial in λ.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentSeries {
    pub lo: i32,
    pub coeffs: Vec<Complex64>,
}

impl LaurentSeries {
    pub fn hi(&self) -> i32 {
        self.lo + self.coeffs.len() as i32 - 1
    }

    pub fn coeff(&self, k: i32) -> Complex64 {
        if k < self.lo || k > self.hi() {
            ZERO
        } else {
            self.coeffs[(k - self.lo) as usize]
        }
    }

    pub fn evaluate(&self, lambda: Complex64) -> Complex64 {
        (self.lo..=self.hi())
            .zip(&self.coeffs)
            .map(|(k, a)| a * lambda.powi(k))
            .sum()
    }
}

fn check_budget(z: Complex64, budget: usize) -> Result<usize> {
    let n = z_terms_for(z);
    if budget < 2 * n {
        return Err(Error::BudgetExceeded {
            needed: 2 * n,
            budget,
        });
    }
    Ok(n)
}

/// `zⁱ/(i!)²` for `i = 0..n`.
fn frobenius_terms(z: Complex64, n: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(n);
    let mut term = ONE;
    for i in 0..n {
        if i > 0 {
            term = term * z / (i * i) as f64;
        }
        out.push(term);
    }
    out
}

fn harmonic(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n];
    for i in 1..n {
        h[i] = h[i - 1] + 1.0 / i as f64;
    }
    h
}

/// f₀ = Σ zⁱ/((i!)² λ^{2i}). `budget` bounds the number of negative λ
/// powers the caller can hold.
pub fn series_f0(z: Complex64, budget: usize) -> Result<LaurentSeries> {
    let n = check_budget(z, budget)?;
    let terms = frobenius_terms(z, n);
    let lo = -2 * (n as i32 - 1);
    let mut coeffs = vec![ZERO; (1 - lo) as usize];
    for (i, t) in terms.iter().enumerate() {
        coeffs[(-2 * i as i32 - lo) as usize] = *t;
    }
    Ok(LaurentSeries { lo, coeffs })
}

/// f₁ = −(2/λ) Σ_{i≥1} H_i zⁱ/((i!)² λ^{2i}), H_i the harmonic numbers.
pub fn series_f1(z: Complex64, budget: usize) -> Result<LaurentSeries> {
    let n = check_budget(z, budget)?;
    let terms = frobenius_terms(z, n);
    let h = harmonic(n);
    let lo = -2 * (n as i32 - 1) - 1;
    let mut coeffs = vec![ZERO; (1 - lo) as usize];
    for i in 1..n {
        coeffs[(-2 * i as i32 - 1 - lo) as usize] = terms[i] * (-2.0 * h[i]);
    }
    Ok(LaurentSeries { lo, coeffs })
}

/// L₀ = [[f₀, λ∂f₀], [f₁, f₀ + λ∂f₁]] with ∂ = z d/dz.
pub fn canonical_l0(p: &FramePoint) -> TruncatedLoop {
    let n = p.z_terms;
    let terms = frobenius_terms(p.z, n);
    let h = harmonic(n);
    let mut out = Vec::with_capacity(4 * n);
    for (i, &t) in terms.iter().enumerate() {
        let fi = i as f64;
        let p0 = -2 * i as i32;
        out.push((p0, mat(t, ZERO, ZERO, t * (1.0 - 2.0 * h[i] * fi))));
        if i > 0 {
            out.push((p0 + 1, mat(ZERO, t * fi, ZERO, ZERO)));
            out.push((p0 - 1, mat(ZERO, ZERO, t * (-2.0 * h[i]), ZERO)));
        }
    }
    TruncatedLoop::from_terms(out)
}

fn check_a(a: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::DomainError(format!("a = {a} must be positive")));
    }
    Ok(())
}

/// γ₀(a) = [[1/√a, −λ/√a], [0, √a]] for a > 0.
pub fn gamma0(a: f64) -> Result<TruncatedLoop> {
    check_a(a)?;
    Ok(gamma0_signed(a))
}

/// Exact inverse [[√a, λ/√a], [0, 1/√a]].
pub fn gamma0_inverse(a: f64) -> Result<TruncatedLoop> {
    check_a(a)?;
    Ok(gamma0_signed(a).adjugate())
}

/// Both branches of the dressing loop: the a > 0 form above, and for a < 0
/// the form [[1/√−a, λ/√−a], [0, √−a]] with C(γ₀)γ₀⁻¹ = −[[a, λ], [−1/λ, 0]].
/// The negative branch is kept for testing only.
#[doc(hidden)]
pub fn gamma0_signed(a: f64) -> TruncatedLoop {
    let s = a.abs().sqrt();
    let off = if a > 0.0 { -1.0 / s } else { 1.0 / s };
    TruncatedLoop::from_terms([
        (0, real_mat(1.0 / s, 0.0, 0.0, s)),
        (1, real_mat(0.0, off, 0.0, 0.0)),
    ])
}

/// E = γ₀⁻¹ e^{tN/λ}.
pub fn model_e(a: f64, t: Complex64) -> Result<TruncatedLoop> {
    Ok(gamma0_inverse(a)?.compose(&TruncatedLoop::exp_tn(t)))
}

#[doc(hidden)]
pub fn model_e_signed(a: f64, t: Complex64) -> TruncatedLoop {
    gamma0_signed(a).adjugate().compose(&TruncatedLoop::exp_tn(t))
}

/// Z = ρ[[a + t + t̄, λ], [−1/λ, 0]], ρ = sign a.
pub fn model_z(a: f64, t: Complex64) -> TruncatedLoop {
    let rho = a.signum();
    let m = a + 2.0 * t.re;
    TruncatedLoop::from_terms([
        (0, real_mat(rho * m, 0.0, 0.0, 0.0)),
        (1, real_mat(0.0, rho, 0.0, 0.0)),
        (-1, real_mat(0.0, 0.0, -rho, 0.0)),
    ])
}

/// The frames attached to one domain point.
#[derive(Clone, Debug)]
pub struct CanonicalFrames {
    pub point: FramePoint,
    pub l0: TruncatedLoop,
    pub l: TruncatedLoop,
    pub e: TruncatedLoop,
    pub z: TruncatedLoop,
}

impl CanonicalFrames {
    pub fn new(point: FramePoint) -> Result<Self> {
        let l0 = canonical_l0(&point);
        let l = TruncatedLoop::exp_tn(point.t).compose(&l0);
        let e = model_e(point.a, point.t)?;
        let z = model_z(point.a, point.t);
        Ok(CanonicalFrames { point, l0, l, e, z })
    }

    /// γ₀⁻¹L = E·L₀, the loop whose Iwasawa factorization defines the surface.
    pub fn dressed(&self) -> TruncatedLoop {
        self.e.compose(&self.l0)
    }
}

/// d(ε) = diag(1, ε).
pub fn d_eps(eps: Complex64) -> Mat2 {
    mat(ONE, ZERO, ZERO, eps)
}

/// δ(ε) = Ẽ·d⁻¹·E⁻¹·d for an arbitrary unimodular dressing loop, where
/// Ẽ(λ) = E(log(ε²z), ελ) with the principal logarithm.
pub fn delta_for(gamma0: &TruncatedLoop, t: Complex64, eps: Complex64) -> TruncatedLoop {
    let t_tilde = (eps * eps * t.exp()).ln();
    let g_inv = gamma0.adjugate();
    let e_tilde = g_inv
        .compose(&TruncatedLoop::exp_tn(t_tilde))
        .rescale_lambda(eps);
    let e_inv = TruncatedLoop::exp_tn(-t).compose(gamma0);
    let d = d_eps(eps);
    let d_inv = d_eps(ONE / eps);
    e_tilde.right_mul_const(&d_inv).compose(&e_inv.right_mul_const(&d))
}

/// δ(ε) for γ₀(a).
pub fn homogeneity_delta(a: f64, t: Complex64, eps: Complex64) -> Result<TruncatedLoop> {
    Ok(delta_for(&gamma0(a)?, t, eps).trimmed(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loops::{max_abs, LoopConfig};
    use proptest::prelude::*;

    fn pt(z: Complex64, a: f64) -> FramePoint {
        FramePoint::new(z, a).unwrap()
    }

    #[test]
    fn f0_at_zero_and_one() {
        let f = series_f0(ZERO, 8).unwrap();
        assert_eq!(f.evaluate(ONE), ONE);
        let f = series_f0(ONE, 64).unwrap();
        // Σ 1/(i!)² = I₀(2)
        let want = 2.279_585_302_336_067_3;
        assert!((f.evaluate(ONE).re - want).abs() < 1e-15);
        let z = c(0.3, 0.1);
        let f = series_f0(z, 64).unwrap();
        assert_eq!(f.coeff(0), ONE);
        assert_eq!(f.coeff(-2), z);
        assert_eq!(f.coeff(-1), ZERO);
    }

    #[test]
    fn f1_leading_terms() {
        assert_eq!(series_f1(ZERO, 8).unwrap().evaluate(ONE), ZERO);
        let z = c(0.4, -0.2);
        let f = series_f1(z, 64).unwrap();
        assert!((f.coeff(-3) - z * -2.0).norm() < 1e-16);
        assert_eq!(f.coeff(-1), ZERO);
    }

    #[test]
    fn f1_harmonic_coefficients() {
        let z = ONE;
        let f = series_f1(z, 128).unwrap();
        let mut h = 0.0;
        let mut fact = 1.0;
        for i in 1..=20usize {
            h += 1.0 / i as f64;
            fact *= i as f64;
            let want = -2.0 * h / (fact * fact);
            let got = f.coeff(-(2 * i as i32) - 1).re;
            if want.abs() > 1e-300 && z_terms_for(z) > i {
                assert!(((got - want) / want).abs() < 1e-14, "i = {i}");
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let err = series_f0(c(5.0, 0.0), 4).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { budget: 4, .. }));
    }

    #[test]
    fn z_terms_tail() {
        assert_eq!(z_terms_for(ZERO), 1);
        for r in [1e-6, 0.5, 3.0, 40.0] {
            let n = z_terms_for(c(r, 0.0));
            let mut term = 1.0;
            for i in 1..=n {
                term *= r / (i * i) as f64;
            }
            assert!(term < SERIES_TAIL || n == MAX_Z_TERMS);
        }
    }

    #[test]
    fn l0_near_zero_is_identity() {
        let l0 = canonical_l0(&pt(c(1e-14, 0.0), 1.0));
        assert!(l0.coeff_distance(&TruncatedLoop::identity()) < 1e-13);
    }

    #[test]
    fn l0_is_homogeneous() {
        let eps = c(0.0, 1.0);
        let z = c(0.1, 0.0);
        let p = pt(z, 1.0);
        let pe = pt(eps * eps * z, 1.0);
        let l0 = canonical_l0(&p);
        let l0e = canonical_l0(&pe);
        let d = d_eps(eps);
        let d_inv = d_eps(ONE / eps);
        for th in [0.1, 1.3, 2.9, -2.0] {
            let lam = Complex64::from_polar(1.0, th);
            let lhs = l0e.evaluate(eps * lam);
            let rhs = d_inv * l0.evaluate(lam) * d;
            assert!(max_abs(&(lhs - rhs)) < 1e-13);
        }
    }

    #[test]
    fn gamma0_values() {
        let g = gamma0(1.0).unwrap();
        assert_eq!(g.coeff(0), Mat2::identity());
        assert_eq!(g.coeff(1), real_mat(0.0, -1.0, 0.0, 0.0));
        let four_gamma = 4.0 * 0.577_215_664_901_532_9;
        let m = gamma0(four_gamma).unwrap().evaluate(ONE);
        let s = four_gamma.sqrt();
        assert!(max_abs(&(m - real_mat(1.0 / s, -1.0 / s, 0.0, s))) < 1e-15);
        assert!((1.0 / s - 0.658).abs() < 1e-3);
        assert!(matches!(gamma0(0.0), Err(Error::DomainError(_))));
        assert!(matches!(gamma0(-1.0), Err(Error::DomainError(_))));
    }

    #[test]
    fn gamma0_inverse_by_compose() {
        for a in [0.3, 1.0, 2.30886, 7.5] {
            let g = gamma0(a).unwrap();
            let gi = gamma0_inverse(a).unwrap();
            let s = a.sqrt();
            assert_eq!(gi.coeff(0), real_mat(s, 0.0, 0.0, 1.0 / s));
            assert!((gi.coeff(1) - real_mat(0.0, 1.0 / s, 0.0, 0.0)).norm() < 1e-15);
            let one = g.compose(&gi).trimmed(1e-15);
            assert!(one.coeff_distance(&TruncatedLoop::identity()) < 1e-15);
        }
    }

    #[test]
    fn gamma0_factored_form() {
        // γ₀ = diag(1, λ)⁻¹·M·diag(1, λ) with M = [[1/√a, −1/√a], [0, √a]]
        let a: f64 = 2.7;
        let s = a.sqrt();
        let dl = TruncatedLoop::from_terms([
            (0, real_mat(1.0, 0.0, 0.0, 0.0)),
            (1, real_mat(0.0, 0.0, 0.0, 1.0)),
        ]);
        let dl_inv = TruncatedLoop::from_terms([
            (0, real_mat(1.0, 0.0, 0.0, 0.0)),
            (-1, real_mat(0.0, 0.0, 0.0, 1.0)),
        ]);
        let m = TruncatedLoop::constant(real_mat(1.0 / s, -1.0 / s, 0.0, s));
        let g = dl_inv.compose(&m).compose(&dl).trimmed(0.0);
        assert!(g.coeff_distance(&gamma0(a).unwrap()) < 1e-15);
    }

    #[test]
    fn gamma0_reality_condition() {
        let cfg = LoopConfig::default();
        for a in [0.5, 1.0, 4.0] {
            let g = gamma0(a).unwrap();
            let lhs = g.apply_c(&cfg).unwrap().compose(&gamma0_inverse(a).unwrap());
            assert!(lhs.trimmed(1e-15).coeff_distance(&model_z(a, ZERO)) < 1e-14);
        }
        // negative branch gives ρ = −1
        let a = -1.5;
        let g = gamma0_signed(a);
        let lhs = g.apply_c(&cfg).unwrap().compose(&g.adjugate());
        assert!(lhs.trimmed(1e-15).coeff_distance(&model_z(a, ZERO)) < 1e-14);
        assert_eq!(model_z(a, ZERO).coeff(0), real_mat(1.5, 0.0, 0.0, 0.0));
    }

    #[test]
    fn model_z_examples() {
        let z = model_z(1.0, c(0.0, 0.7));
        assert_eq!(z.coeff(0), real_mat(1.0, 0.0, 0.0, 0.0));
        assert_eq!(z.coeff(1), real_mat(0.0, 1.0, 0.0, 0.0));
        assert_eq!(z.coeff(-1), real_mat(0.0, 0.0, -1.0, 0.0));
        let z = model_z(1.0, c(-1.0, 0.2));
        assert_eq!(z.coeff(0), real_mat(-1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn delta_is_identity_at_eps_one() {
        let d = homogeneity_delta(1.3, c(-0.5, 0.4), ONE).unwrap();
        assert!(d.coeff_distance(&TruncatedLoop::identity()) < 1e-15);
    }

    #[test]
    fn delta_is_real_for_gamma0() {
        let cfg = LoopConfig::default();
        let t = c(0.2f64.ln(), 0.0);
        let d = homogeneity_delta(1.0, t, c(0.0, 1.0)).unwrap();
        let cd = d.apply_c(&cfg).unwrap();
        assert!(cd.coeff_distance(&d) < 1e-10);
        assert!(d.is_twisted(1e-14));
        // negative control: γ₀ = I does not give a real δ
        let bad = delta_for(&TruncatedLoop::identity(), t, c(0.0, 1.0));
        let cb = bad.apply_c(&cfg).unwrap();
        assert!(cb.coeff_distance(&bad) > 1e-3);
    }

    #[test]
    fn connection_form_matches_potential() {
        // L⁻¹ dL = (1/λ) [[0, 1], [1/z, 0]] dz
        let h = 1e-5;
        for z in [c(0.3, 0.1), c(-0.2, 0.25), c(1.5, -0.4)] {
            let l = |z: Complex64| CanonicalFrames::new(pt(z, 1.0)).unwrap().l;
            let lam = Complex64::from_polar(1.0, 0.8);
            let lz = l(z).evaluate(lam);
            let dl = (l(z + h).evaluate(lam) - l(z - h).evaluate(lam)) / c(2.0 * h, 0.0);
            let form = lz.try_inverse().unwrap() * dl;
            let want = mat(ZERO, ONE / lam, ONE / (lam * z), ZERO);
            assert!(max_abs(&(form - want)) < 1e-6, "z = {z}");
        }
    }

    #[test]
    fn potential_is_homogeneous() {
        // η(ε²z, ελ) d(ε²z) = d⁻¹ η(z, λ) d dz
        let eta = |z: Complex64, lam: Complex64| mat(ZERO, ONE / lam, ONE / (lam * z), ZERO);
        let z = c(0.3, -0.2);
        let lam = Complex64::from_polar(1.0, 0.4);
        for th in [0.3, 1.0, 2.2] {
            let eps = Complex64::from_polar(1.0, th);
            let lhs = eta(eps * eps * z, eps * lam) * (eps * eps);
            let rhs = d_eps(ONE / eps) * eta(z, lam) * d_eps(eps);
            assert!(max_abs(&(lhs - rhs)) < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn frames_are_unimodular_and_twisted(r in 1e-4..2.0f64, th in -3.1..3.1f64, a in 0.1..10.0f64) {
            let p = FramePoint::polar(r, th, a).unwrap();
            let f = CanonicalFrames::new(p).unwrap();
            for l in [&f.l0, &f.l, &f.e, &f.z, &gamma0(a).unwrap()] {
                prop_assert!(l.is_twisted(0.0));
                prop_assert!(l.det_defect(128) < 1e-10);
            }
        }

        #[test]
        fn z_matches_c_of_e(r in 1e-3..3.0f64, th in -3.1..3.1f64, a in 0.1..10.0f64) {
            let p = FramePoint::polar(r, th, a).unwrap();
            let f = CanonicalFrames::new(p).unwrap();
            let z = f.e.c_inverse().compose(&f.e).trimmed(0.0);
            prop_assert!(z.coeff_distance(&f.z) < 1e-12);
            let cfg = LoopConfig::default();
            let cz = f.z.apply_c(&cfg).unwrap();
            let zi = f.z.invert(&cfg).unwrap();
            prop_assert!(cz.coeff_distance(&zi) < 1e-12);
        }
    }
}
