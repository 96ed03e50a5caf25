//! 2×2 complex matrix Laurent polynomials in the loop parameter λ.
//!
//! A [`TruncatedLoop`] stores coefficients for the powers `lo..=hi`. Circle
//! samples at the `n`-th roots of unity are produced on demand by FFT and
//! cached (first request wins). Products are exact convolutions; inversion
//! is exact for loops with constant determinant and goes through the
//! samples otherwise.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock};

use nalgebra::Matrix2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn mat(a: Complex64, b: Complex64, cc: Complex64, d: Complex64) -> Mat2 {
    Mat2::new(a, b, cc, d)
}

pub fn real_mat(a: f64, b: f64, cc: f64, d: f64) -> Mat2 {
    Mat2::new(c(a, 0.0), c(b, 0.0), c(cc, 0.0), c(d, 0.0))
}

/// D = diag(1, −1).
pub fn d_matrix() -> Mat2 {
    real_mat(1.0, 0.0, 0.0, -1.0)
}

/// P, the antidiagonal matrix of ones.
pub fn p_matrix() -> Mat2 {
    real_mat(0.0, 1.0, 1.0, 0.0)
}

/// Largest entry modulus.
pub fn max_abs(m: &Mat2) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn adjugate(m: &Mat2) -> Mat2 {
    mat(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)])
}

/// Tunables shared by the loop and factorization code.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LoopConfig {
    pub sample_count: usize,
    pub degree: usize,
    pub tol_det: f64,
    pub tol_residual: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            sample_count: 256,
            degree: 16,
            tol_det: 1e-10,
            tol_residual: 1e-10,
        }
    }
}

impl LoopConfig {
    pub fn with_degree(mut self, degree: usize) -> Self {
        self.degree = degree;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sample_count.is_power_of_two() {
            return Err(Error::DomainError(format!(
                "sample_count {} is not a power of two",
                self.sample_count
            )));
        }
        if self.degree < 1 {
            return Err(Error::DomainError("degree must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
struct SampleCache {
    n: usize,
    values: Vec<Mat2>,
}

/// Matrix Laurent polynomial `Σ_{k=lo}^{hi} A_k λ^k`.
#[derive(Clone)]
pub struct TruncatedLoop {
    lo: i32,
    hi: i32,
    coeffs: Vec<Mat2>,
    samples: OnceLock<Arc<SampleCache>>,
}

impl fmt::Debug for TruncatedLoop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_map();
        for (k, m) in self.terms() {
            s.entry(&k, &[[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]);
        }
        s.finish()
    }
}

impl TruncatedLoop {
    /// Builds a loop from coefficients of `λ^lo, λ^(lo+1), ...`.
    pub fn new(lo: i32, coeffs: Vec<Mat2>) -> Self {
        if coeffs.is_empty() {
            return Self::zero();
        }
        let hi = lo + coeffs.len() as i32 - 1;
        TruncatedLoop {
            lo,
            hi,
            coeffs,
            samples: OnceLock::new(),
        }
    }

    /// Builds a loop from `(power, coefficient)` pairs; repeated powers add.
    pub fn from_terms<I: IntoIterator<Item = (i32, Mat2)>>(terms: I) -> Self {
        let terms: Vec<(i32, Mat2)> = terms.into_iter().collect();
        if terms.is_empty() {
            return Self::zero();
        }
        let lo = terms.iter().map(|t| t.0).min().unwrap();
        let hi = terms.iter().map(|t| t.0).max().unwrap();
        let mut coeffs = vec![Mat2::zeros(); (hi - lo + 1) as usize];
        for (k, m) in terms {
            coeffs[(k - lo) as usize] += m;
        }
        Self::new(lo, coeffs)
    }

    pub fn zero() -> Self {
        TruncatedLoop {
            lo: 0,
            hi: 0,
            coeffs: vec![Mat2::zeros()],
            samples: OnceLock::new(),
        }
    }

    pub fn constant(m: Mat2) -> Self {
        Self::new(0, vec![m])
    }

    pub fn identity() -> Self {
        Self::constant(Mat2::identity())
    }

    pub fn monomial(power: i32, m: Mat2) -> Self {
        Self::new(power, vec![m])
    }

    /// diag(k, 1/k).
    pub fn diag_k(k: f64) -> Self {
        Self::constant(real_mat(k, 0.0, 0.0, 1.0 / k))
    }

    /// The orbit representative w = [[0, λ], [−1/λ, 0]].
    pub fn w() -> Self {
        Self::from_terms([
            (1, real_mat(0.0, 1.0, 0.0, 0.0)),
            (-1, real_mat(0.0, 0.0, -1.0, 0.0)),
        ])
    }

    /// e^{tN/λ} = [[1, 0], [t/λ, 1]] with N = [[0, 0], [1, 0]].
    pub fn exp_tn(t: Complex64) -> Self {
        Self::from_terms([
            (0, Mat2::identity()),
            (-1, mat(ZERO, ZERO, t, ZERO)),
        ])
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    pub fn hi(&self) -> i32 {
        self.hi
    }

    pub fn coeffs(&self) -> &[Mat2] {
        &self.coeffs
    }

    /// Coefficient of `λ^k` (zero outside the stored range).
    pub fn coeff(&self, k: i32) -> Mat2 {
        if k < self.lo || k > self.hi {
            Mat2::zeros()
        } else {
            self.coeffs[(k - self.lo) as usize]
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (i32, &Mat2)> {
        (self.lo..=self.hi).zip(self.coeffs.iter())
    }

    /// Drops leading and trailing coefficients whose entries are all `<= tol`.
    pub fn trimmed(&self, tol: f64) -> Self {
        let keep: Vec<i32> = self
            .terms()
            .filter(|(_, m)| max_abs(m) > tol)
            .map(|(k, _)| k)
            .collect();
        match (keep.first(), keep.last()) {
            (Some(&a), Some(&b)) => {
                Self::new(a, self.coeffs[(a - self.lo) as usize..=(b - self.lo) as usize].to_vec())
            }
            _ => Self::zero(),
        }
    }

    /// Restricts to powers in `[lo, hi]`, failing if the discarded tail is
    /// larger than `tol` (sum of entry moduli).
    pub fn retruncate(&self, lo: i32, hi: i32, tol: f64) -> Result<Self> {
        let tail: f64 = self
            .terms()
            .filter(|(k, _)| *k < lo || *k > hi)
            .map(|(_, m)| m.iter().map(|z| z.norm()).sum::<f64>())
            .sum();
        if tail > tol {
            return Err(Error::DegreeOverflow { tail, tol });
        }
        let lo = lo.max(self.lo);
        let hi = hi.min(self.hi);
        if lo > hi {
            return Ok(Self::zero());
        }
        Ok(Self::new(lo, (lo..=hi).map(|k| self.coeff(k)).collect()))
    }

    pub fn evaluate(&self, lambda: Complex64) -> Mat2 {
        // Horner in λ, then shift by λ^lo.
        let mut acc = Mat2::zeros();
        for m in self.coeffs.iter().rev() {
            acc = acc * lambda + m;
        }
        acc * lambda.powi(self.lo)
    }

    /// Exact product (Minkowski sum of the power ranges).
    pub fn compose(&self, other: &Self) -> Self {
        let n = self.coeffs.len() + other.coeffs.len() - 1;
        let mut out = vec![Mat2::zeros(); n];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(self.lo + other.lo, out)
    }

    pub fn map_coeffs<F: Fn(i32, &Mat2) -> Mat2>(&self, f: F) -> Self {
        Self::new(self.lo, self.terms().map(|(k, m)| f(k, m)).collect())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        self.map_coeffs(|_, m| m * s)
    }

    pub fn left_mul_const(&self, g: &Mat2) -> Self {
        self.map_coeffs(|_, m| g * m)
    }

    pub fn right_mul_const(&self, g: &Mat2) -> Self {
        self.map_coeffs(|_, m| m * g)
    }

    /// `λ ↦ s·λ`: coefficient `k` is multiplied by `s^k`.
    pub fn rescale_lambda(&self, s: Complex64) -> Self {
        self.map_coeffs(|k, m| m * s.powi(k))
    }

    /// Coefficientwise adjugate [[d, −b], [−c, a]].
    pub fn adjugate(&self) -> Self {
        self.map_coeffs(|_, m| adjugate(m))
    }

    /// det A(λ) as a scalar Laurent polynomial `(lo, coefficients)`.
    pub fn det_coeffs(&self) -> (i32, Vec<Complex64>) {
        let n = 2 * self.coeffs.len() - 1;
        let mut out = vec![ZERO; n];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in self.coeffs.iter().enumerate() {
                out[i + j] += a[(0, 0)] * b[(1, 1)] - a[(0, 1)] * b[(1, 0)];
            }
        }
        (2 * self.lo, out)
    }

    /// If det A is the constant `c` up to `tol`, returns `c`.
    pub fn constant_det(&self, tol: f64) -> Option<Complex64> {
        let (lo, d) = self.det_coeffs();
        let c0 = if (lo..lo + d.len() as i32).contains(&0) {
            d[(-lo) as usize]
        } else {
            ZERO
        };
        let rest: f64 = d
            .iter()
            .enumerate()
            .filter(|(i, _)| *i as i32 + lo != 0)
            .map(|(_, z)| z.norm())
            .sum();
        (rest <= tol).then_some(c0)
    }

    /// Max over `n` circle samples of |det A − 1|.
    pub fn det_defect(&self, n: usize) -> f64 {
        self.samples(n)
            .iter()
            .map(|m| (m.determinant() - ONE).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_unimodular(&self, tol: f64) -> bool {
        self.det_defect(self.min_samples().max(64)) <= tol
    }

    /// Smallest power-of-two sample count that resolves the stored range.
    pub fn min_samples(&self) -> usize {
        (2 * self.coeffs.len()).next_power_of_two()
    }

    /// Values at `λ_j = exp(2πi j/n)`, `j = 0..n`. `n` is rounded up to a
    /// power of two that is at least `2·(hi − lo + 1)`.
    pub fn samples(&self, n: usize) -> Arc<Vec<Mat2>> {
        let n = n.max(self.min_samples()).next_power_of_two();
        if let Some(cache) = self.samples.get() {
            if cache.n == n {
                return Arc::new(cache.values.clone());
            }
        }
        let values = self.compute_samples(n);
        let _ = self.samples.set(Arc::new(SampleCache {
            n,
            values: values.clone(),
        }));
        Arc::new(values)
    }

    fn compute_samples(&self, n: usize) -> Vec<Mat2> {
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_inverse(n);
        let mut out = vec![Mat2::zeros(); n];
        for (r, cc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let mut buf = vec![ZERO; n];
            for (k, m) in self.terms() {
                buf[k.rem_euclid(n as i32) as usize] += m[(r, cc)];
            }
            fft.process(&mut buf);
            for (o, v) in out.iter_mut().zip(buf) {
                o[(r, cc)] = v;
            }
        }
        out
    }

    /// Recovers the coefficients of powers `lo..=hi` from `n` circle samples.
    /// Powers outside the window alias into it.
    pub fn from_samples(samples: &[Mat2], lo: i32, hi: i32) -> Self {
        let n = samples.len();
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(n);
        let mut coeffs = vec![Mat2::zeros(); (hi - lo + 1) as usize];
        for (r, cc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let mut buf: Vec<Complex64> = samples.iter().map(|m| m[(r, cc)]).collect();
            fft.process(&mut buf);
            for (i, k) in (lo..=hi).enumerate() {
                coeffs[i][(r, cc)] = buf[k.rem_euclid(n as i32) as usize] / n as f64;
            }
        }
        Self::new(lo, coeffs)
    }

    /// Largest entry modulus over the circle samples.
    pub fn sup_norm(&self, n: usize) -> f64 {
        self.samples(n).iter().map(max_abs).fold(0.0, f64::max)
    }

    /// Largest coefficient-entry difference.
    pub fn coeff_distance(&self, other: &Self) -> f64 {
        let lo = self.lo.min(other.lo);
        let hi = self.hi.max(other.hi);
        (lo..=hi)
            .map(|k| max_abs(&(self.coeff(k) - other.coeff(k))))
            .fold(0.0, f64::max)
    }

    /// Pointwise inverse.
    ///
    /// Loops with constant determinant are inverted exactly through the
    /// adjugate. Otherwise the inverse is formed on the circle samples and
    /// truncated to powers `[-degree, degree]`; a residual above
    /// `tol_residual` is reported as `DegreeOverflow`.
    pub fn invert(&self, cfg: &LoopConfig) -> Result<Self> {
        if let Some(d) = self.constant_det(cfg.tol_det * 1e-3) {
            if d.norm() < cfg.tol_det {
                return Err(Error::SingularLoop { min_det: d.norm() });
            }
            return Ok(self.adjugate().scale(ONE / d));
        }
        let deg = cfg.degree as i32;
        let n = cfg
            .sample_count
            .max(2 * (2 * cfg.degree + 1))
            .max(self.min_samples())
            .next_power_of_two();
        let s = self.samples(n);
        let mut min_det = f64::INFINITY;
        let mut inv = Vec::with_capacity(n);
        for m in s.iter() {
            let d = m.determinant();
            min_det = min_det.min(d.norm());
            inv.push(adjugate(m) / d);
        }
        if min_det < cfg.tol_det {
            return Err(Error::SingularLoop { min_det });
        }
        let out = Self::from_samples(&inv, -deg, deg);
        let residual = (self.compose(&out) - Self::identity()).sup_norm(n);
        if residual > cfg.tol_residual {
            return Err(Error::DegreeOverflow {
                tail: residual,
                tol: cfg.tol_residual,
            });
        }
        Ok(out)
    }

    /// C(A)⁻¹(λ) = D·A(1/λ̄)^†·D, computed coefficientwise without inversion.
    pub fn c_inverse(&self) -> Self {
        let d = d_matrix();
        Self::from_terms(self.terms().map(|(k, m)| (-k, d * m.adjoint() * d)))
    }

    /// C(A)(λ) = D·(A(1/λ̄)^†)⁻¹·D.
    pub fn apply_c(&self, cfg: &LoopConfig) -> Result<Self> {
        self.c_inverse().invert(cfg)
    }

    /// σ(A)(λ) = D·A(−λ)·D.
    pub fn apply_sigma(&self) -> Self {
        let d = d_matrix();
        self.map_coeffs(|k, m| {
            let s = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            d * m * d * c(s, 0.0)
        })
    }

    /// Largest coefficient entry that violates the σ-twisting pattern
    /// (diagonal on even powers, off-diagonal on odd powers).
    pub fn twist_defect(&self) -> f64 {
        self.terms()
            .map(|(k, m)| {
                if k.rem_euclid(2) == 0 {
                    m[(0, 1)].norm().max(m[(1, 0)].norm())
                } else {
                    m[(0, 0)].norm().max(m[(1, 1)].norm())
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn is_twisted(&self, tol: f64) -> bool {
        self.twist_defect() <= tol
    }

    /// d/dλ, coefficientwise.
    pub fn lambda_derivative(&self) -> Self {
        if self.lo == 0 && self.hi == 0 {
            return Self::zero();
        }
        Self::from_terms(
            self.terms()
                .filter(|(k, _)| *k != 0)
                .map(|(k, m)| (k - 1, m * c(k as f64, 0.0))),
        )
    }
}

impl PartialEq for TruncatedLoop {
    fn eq(&self, other: &Self) -> bool {
        self.coeff_distance(other) == 0.0
    }
}

impl Add for &TruncatedLoop {
    type Output = TruncatedLoop;
    fn add(self, rhs: Self) -> TruncatedLoop {
        let lo = self.lo.min(rhs.lo);
        let hi = self.hi.max(rhs.hi);
        TruncatedLoop::new(lo, (lo..=hi).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Add for TruncatedLoop {
    type Output = TruncatedLoop;
    fn add(self, rhs: Self) -> TruncatedLoop {
        &self + &rhs
    }
}

impl Neg for &TruncatedLoop {
    type Output = TruncatedLoop;
    fn neg(self) -> TruncatedLoop {
        self.map_coeffs(|_, m| -m)
    }
}

impl Sub for &TruncatedLoop {
    type Output = TruncatedLoop;
    fn sub(self, rhs: Self) -> TruncatedLoop {
        self + &(-rhs)
    }
}

impl Sub for TruncatedLoop {
    type Output = TruncatedLoop;
    fn sub(self, rhs: Self) -> TruncatedLoop {
        &self - &rhs
    }
}

impl Mul for &TruncatedLoop {
    type Output = TruncatedLoop;
    fn mul(self, rhs: Self) -> TruncatedLoop {
        self.compose(rhs)
    }
}

impl Mul for TruncatedLoop {
    type Output = TruncatedLoop;
    fn mul(self, rhs: Self) -> TruncatedLoop {
        self.compose(&rhs)
    }
}

/// Free-function form of [`TruncatedLoop::compose`].
pub fn compose(a: &TruncatedLoop, b: &TruncatedLoop) -> TruncatedLoop {
    a.compose(b)
}

pub fn invert(a: &TruncatedLoop, cfg: &LoopConfig) -> Result<TruncatedLoop> {
    a.invert(cfg)
}

pub fn evaluate(a: &TruncatedLoop, lambda: Complex64) -> Mat2 {
    a.evaluate(lambda)
}

pub fn apply_c(a: &TruncatedLoop, cfg: &LoopConfig) -> Result<TruncatedLoop> {
    a.apply_c(cfg)
}

pub fn apply_sigma(a: &TruncatedLoop) -> TruncatedLoop {
    a.apply_sigma()
}

pub fn lambda_derivative(a: &TruncatedLoop) -> TruncatedLoop {
    a.lambda_derivative()
}
