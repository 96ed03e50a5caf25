//! Surface data from the Iwasawa factors: the Sym–Bobenko immersion into
//! ℝ²·¹, metric and Hopf differential, the radial Gauss–Codazzi check, polar
//! meshes, and the length of the curve running into the puncture.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::{iwasawa_su11, IwasawaDiagnostics, IwasawaFactors, Orbit};
use crate::loops::{c, mat, max_abs, LoopConfig, Mat2, TruncatedLoop};
use crate::qc_frames::{CanonicalFrames, FramePoint};

/// Mean curvature used throughout.
pub const H_DEFAULT: f64 = 0.5;
/// Allowed distance of the Sym matrix from su(1,1).
pub const SYM_TOL: f64 = 1e-8;
/// Angular clearance from the slit.
pub const SLIT_CLEARANCE: f64 = 1e-3;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// x1² + x2² − x3².
pub fn minkowski_dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] - a[2] * b[2]
}

/// [[i x3, x1 + i x2], [x1 − i x2, −i x3]].
pub fn chart(x: &[f64; 3]) -> Mat2 {
    mat(
        c(0.0, x[2]),
        c(x[0], x[1]),
        c(x[0], -x[1]),
        c(0.0, -x[2]),
    )
}

/// Coordinates of the nearest chart matrix and the distance to it.
pub fn unchart(m: &Mat2) -> ([f64; 3], f64) {
    let x1 = ((m[(0, 1)] + m[(1, 0)]) * 0.5).re;
    let x2 = ((m[(0, 1)] - m[(1, 0)]) * c(0.0, -0.5)).re;
    let x3 = ((m[(0, 0)] - m[(1, 1)]) * c(0.0, -0.5)).re;
    let x = [x1, x2, x3];
    let defect = max_abs(&(m - chart(&x)));
    (x, defect)
}

/// Sym–Bobenko immersion. F is replaced by F̂ = diag(1, i)·F·w·diag(1, i)⁻¹
/// and f = −(i/2H)(F̂DF̂⁻¹ + 2λ(∂_λF̂)F̂⁻¹) at λ = 1.
pub fn sym_bobenko(f: &TruncatedLoop, orbit: Orbit, h: f64) -> Result<[f64; 3]> {
    if h == 0.0 || !h.is_finite() {
        return Err(Error::DomainError(format!("mean curvature {h} must be nonzero")));
    }
    let p = mat(ONE, c(0.0, 0.0), c(0.0, 0.0), I);
    let p_inv = mat(ONE, c(0.0, 0.0), c(0.0, 0.0), -I);
    let fh = f
        .compose(&orbit.representative())
        .left_mul_const(&p)
        .right_mul_const(&p_inv);
    let f1 = fh.evaluate(ONE);
    let df1 = fh.lambda_derivative().evaluate(ONE);
    let f1_inv = f1
        .try_inverse()
        .ok_or(Error::SingularLoop { min_det: f1.determinant().norm() })?;
    let d = crate::loops::d_matrix();
    let m = (f1 * d * f1_inv + df1 * f1_inv * c(2.0, 0.0)) * c(0.0, -0.5 / h);
    let (x, defect) = unchart(&m);
    if !(defect <= SYM_TOL * (1.0 + max_abs(&m))) {
        return Err(Error::NotInRealForm { defect });
    }
    Ok(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub z: [f64; 2],
    pub point: [f64; 3],
    /// Metric exponent, g = 4e^{2u}|dz|².
    pub u: f64,
    pub k: f64,
    pub orbit: Orbit,
    pub h: f64,
    /// Hopf coefficient Q = 2/(zH).
    pub q: [f64; 2],
}

impl SurfaceSample {
    pub fn from_factors(z: Complex64, factors: &IwasawaFactors, h: f64) -> Result<Self> {
        let point = sym_bobenko(&factors.f, factors.orbit, h)?;
        let q = c(2.0, 0.0) / (z * h);
        Ok(SurfaceSample {
            z: [z.re, z.im],
            point,
            u: (factors.k * factors.k / h).ln(),
            k: factors.k,
            orbit: factors.orbit,
            h,
            q: [q.re, q.im],
        })
    }
}

/// Factorization of γ₀⁻¹L at one domain point.
pub fn factor_point(p: &FramePoint, cfg: &LoopConfig) -> Result<IwasawaFactors> {
    let frames = CanonicalFrames::new(*p)?;
    iwasawa_su11(&frames.dressed(), cfg)
}

/// Full per-point pipeline: frames, factorization, immersion.
pub fn surface_point(a: f64, r: f64, theta: f64, h: f64, cfg: &LoopConfig) -> Result<(SurfaceSample, IwasawaDiagnostics)> {
    let p = FramePoint::polar(r, theta, a)?;
    let f = factor_point(&p, cfg)?;
    Ok((SurfaceSample::from_factors(p.z, &f, h)?, f.diagnostics))
}

/// Metric exponent u(r) on the positive real axis, computed in parallel.
pub fn radial_u(a: f64, r: &[f64], h: f64, cfg: &LoopConfig) -> Result<Vec<f64>> {
    r.par_iter()
        .map(|&r| {
            let p = FramePoint::polar(r, 0.0, a)?;
            let f = factor_point(&p, cfg)?;
            Ok((f.k * f.k / h).ln())
        })
        .collect()
}

/// Pointwise residual of (1/4)(u_rr + u_r/r) − H²e^{2u} + e^{−2u}/(H²r²) at
/// interior nodes of a uniform grid, with the magnitude of the largest term.
pub fn gauss_codazzi_profile(r: &[f64], u: &[f64], h: f64) -> Result<Vec<(f64, f64, f64)>> {
    let n = r.len();
    if n < 5 || u.len() != n {
        return Err(Error::GridTooCoarse { points: n.min(u.len()) });
    }
    let dr = (r[n - 1] - r[0]) / (n - 1) as f64;
    let uniform = r
        .windows(2)
        .all(|w| ((w[1] - w[0]) - dr).abs() <= 1e-9 * dr.abs().max(1e-300));
    if !uniform || dr <= 0.0 {
        return Err(Error::DomainError("radial grid must be uniform and increasing".into()));
    }
    Ok((1..n - 1)
        .map(|i| {
            let urr = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (dr * dr);
            let ur = (u[i + 1] - u[i - 1]) / (2.0 * dr);
            let lap = 0.25 * (urr + ur / r[i]);
            let a = h * h * (2.0 * u[i]).exp();
            let b = (-2.0 * u[i]).exp() / (h * h * r[i] * r[i]);
            let scale = lap.abs().max(a).max(b);
            (r[i], lap - a + b, scale)
        })
        .collect())
}

/// Max absolute Gauss–Codazzi residual with second-order central differences.
pub fn gauss_codazzi_residual(r: &[f64], u: &[f64], h: f64) -> Result<f64> {
    Ok(gauss_codazzi_profile(r, u, h)?
        .iter()
        .fold(0.0, |m, p| m.max(p.1.abs())))
}

/// Max residual relative to the largest term at each node.
pub fn gauss_codazzi_relative(r: &[f64], u: &[f64], h: f64) -> Result<f64> {
    Ok(gauss_codazzi_profile(r, u, h)?
        .iter()
        .fold(0.0, |m, p| m.max(p.1.abs() / p.2)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub nr: usize,
    pub ntheta: usize,
    pub theta_clearance: f64,
}

impl GridSpec {
    pub fn new(r_min: f64, r_max: f64, nr: usize, ntheta: usize) -> Self {
        GridSpec {
            r_min,
            r_max,
            nr,
            ntheta,
            theta_clearance: SLIT_CLEARANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0) || !(self.r_max >= self.r_min) || !self.r_max.is_finite() {
            return Err(Error::DomainError(format!(
                "radial range [{}, {}] must satisfy 0 < r_min <= r_max",
                self.r_min, self.r_max
            )));
        }
        if self.nr < 2 || self.ntheta < 2 {
            return Err(Error::GridTooCoarse { points: self.nr.min(self.ntheta) });
        }
        if !(self.theta_clearance > 0.0 && self.theta_clearance < std::f64::consts::PI) {
            return Err(Error::DomainError("angular clearance must lie in (0, π)".into()));
        }
        Ok(())
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.r_min + (self.r_max - self.r_min) * i as f64 / (self.nr - 1) as f64
    }

    /// Symmetric about 0, so θ_j and θ_{n−1−j} are mirror images.
    pub fn angle(&self, j: usize) -> f64 {
        let lim = std::f64::consts::PI - self.theta_clearance;
        -lim + 2.0 * lim * j as f64 / (self.ntheta - 1) as f64
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ntheta + j
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum VertexStatus {
    Regular,
    /// Factorized, but in the other open orbit than the one at the puncture.
    OrbitChange,
    /// Factorization or immersion failed.
    Singular(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshVertex {
    pub r: f64,
    pub theta: f64,
    pub sample: Option<SurfaceSample>,
    pub diagnostics: Option<IwasawaDiagnostics>,
    pub status: VertexStatus,
}

impl MeshVertex {
    pub fn is_singular(&self) -> bool {
        matches!(self.status, VertexStatus::Singular(_))
    }

    pub fn is_flagged(&self) -> bool {
        self.status != VertexStatus::Regular
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurfaceMesh {
    pub a: f64,
    pub grid: GridSpec,
    pub reference_orbit: Orbit,
    /// Row-major in (r, θ).
    pub vertices: Vec<MeshVertex>,
    /// Quads as vertex indices, counter-clockwise in the (r, θ) plane.
    pub faces: Vec<[usize; 4]>,
    pub dropped_faces: Vec<[usize; 4]>,
}

impl SurfaceMesh {
    pub fn singular_count(&self) -> usize {
        self.vertices.iter().filter(|v| v.is_singular()).count()
    }

    pub fn flagged_count(&self) -> usize {
        self.vertices.iter().filter(|v| v.is_flagged()).count()
    }

    pub fn point(&self, i: usize, j: usize) -> Option<[f64; 3]> {
        self.vertices[self.grid.index(i, j)].sample.map(|s| s.point)
    }

    /// Largest |X(z̄) − (x1, −x2, x3)(X(z))| over vertex pairs that both exist.
    pub fn reflection_defect(&self) -> f64 {
        let g = &self.grid;
        let mut worst: f64 = 0.0;
        for i in 0..g.nr {
            for j in 0..g.ntheta {
                if let (Some(p), Some(q)) = (self.point(i, j), self.point(i, g.ntheta - 1 - j)) {
                    let d = ((p[0] - q[0]).powi(2) + (p[1] + q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
                    worst = worst.max(d);
                }
            }
        }
        worst
    }
}

/// Factorizes every vertex of a polar grid (in parallel) and assembles quads.
///
/// Vertices whose factorization fails are marked singular; vertices in the
/// other orbit than the one at the puncture (where γ₀⁻¹L lies in the w orbit)
/// are marked as orbit changes. Faces touching a singular vertex or spanning
/// an orbit change are dropped.
pub fn build_mesh(a: f64, grid: &GridSpec, h: f64, cfg: &LoopConfig) -> Result<SurfaceMesh> {
    grid.validate()?;
    cfg.validate()?;
    if !(a > 0.0) {
        return Err(Error::DomainError(format!("a = {a} must be positive")));
    }
    let reference_orbit = Orbit::W;
    let coords: Vec<(f64, f64)> = (0..grid.nr)
        .flat_map(|i| (0..grid.ntheta).map(move |j| (grid.radius(i), grid.angle(j))))
        .collect();
    let vertices: Vec<MeshVertex> = coords
        .par_iter()
        .map(|&(r, theta)| match surface_point(a, r, theta, h, cfg) {
            Ok((s, d)) => MeshVertex {
                r,
                theta,
                status: if s.orbit == reference_orbit {
                    VertexStatus::Regular
                } else {
                    VertexStatus::OrbitChange
                },
                sample: Some(s),
                diagnostics: Some(d),
            },
            Err(e) => MeshVertex {
                r,
                theta,
                sample: None,
                diagnostics: None,
                status: VertexStatus::Singular(e.to_string()),
            },
        })
        .collect();

    let mut faces = Vec::new();
    let mut dropped = Vec::new();
    for i in 0..grid.nr - 1 {
        for j in 0..grid.ntheta - 1 {
            let q = [
                grid.index(i, j),
                grid.index(i + 1, j),
                grid.index(i + 1, j + 1),
                grid.index(i, j + 1),
            ];
            let vs = q.map(|k| &vertices[k]);
            let singular = vs.iter().any(|v| v.is_singular());
            let mixed = !singular && vs.iter().any(|v| v.sample.unwrap().orbit != vs[0].sample.unwrap().orbit);
            if singular || mixed {
                dropped.push(q);
            } else {
                faces.push(q);
            }
        }
    }
    Ok(SurfaceMesh {
        a,
        grid: *grid,
        reference_orbit,
        vertices,
        faces,
        dropped_faces: dropped,
    })
}

/// Length of the image of `t ↦ (e^{−t}, 0)`, `t ∈ [t0, t1]`, for a given
/// conformal factor `e^u` as a function of r: `∫ e^{−t}·2e^{u(e^{−t})} dt`.
pub fn curve_length_with<F: Fn(f64) -> Result<f64> + Sync>(exp_u: F, t0: f64, t1: f64) -> Result<f64> {
    if !(t1 > t0) {
        return Err(Error::DomainError(format!("empty parameter range [{t0}, {t1}]")));
    }
    let rule = GaussLegendre::new(NonZeroUsize::new(12).unwrap());
    let panels = ((t1 - t0).ceil() as usize * 2).max(4);
    let w = (t1 - t0) / panels as f64;
    let parts: Result<Vec<f64>> = (0..panels)
        .into_par_iter()
        .map(|p| {
            let lo = t0 + p as f64 * w;
            let nodes: Vec<(f64, f64)> = rule
                .iter()
                .map(|(x, wt)| (lo + 0.5 * w * (x + 1.0), 0.5 * w * wt))
                .collect();
            let mut acc = 0.0;
            for (t, wt) in nodes {
                let r = (-t).exp();
                acc += wt * r * 2.0 * exp_u(r)?;
            }
            Ok(acc)
        })
        .collect();
    Ok(parts?.iter().sum())
}

/// Length of the curve into the puncture along the positive axis, using
/// e^u = k²/H from the factorization.
pub fn slit_curve_length(a: f64, t0: f64, t1: f64, cfg: &LoopConfig) -> Result<f64> {
    curve_length_with(
        |r| {
            let p = FramePoint::polar(r, 0.0, a)?;
            let f = factor_point(&p, cfg)?;
            Ok(f.k * f.k / H_DEFAULT)
        },
        t0,
        t1,
    )
}

/// Closed form of `∫_{t0}^{t1} 2e^{−t}(−2a + 4t) dt`, the length with the
/// small-r asymptotics e^u ≈ −2(a + 2 log r).
pub fn asymptotic_curve_length(a: f64, t0: f64, t1: f64) -> f64 {
    let g = |t: f64| {
        if t == f64::INFINITY {
            0.0
        } else {
            (-2.0 * a + 4.0 * t + 4.0) * (-t).exp()
        }
    };
    2.0 * (g(t0) - g(t1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::model_iwasawa;
    use proptest::prelude::*;

    const FOUR_GAMMA: f64 = 4.0 * 0.577_215_664_901_532_9;

    #[test]
    fn identity_frame_maps_to_axis() {
        let x = sym_bobenko(&TruncatedLoop::identity(), Orbit::Identity, 0.5).unwrap();
        assert!((x[0]).abs() < 1e-15 && x[1].abs() < 1e-15);
        assert!((x[2] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn chart_norm_is_minus_det() {
        let x = [0.3, -1.2, 0.7];
        let m = chart(&x);
        assert!((minkowski_dot(&x, &x) + m.determinant().re).abs() < 1e-15);
        let (y, d) = unchart(&m);
        assert!(d < 1e-15);
        assert!((0..3).all(|i| (x[i] - y[i]).abs() < 1e-15));
    }

    #[test]
    fn non_real_frame_is_rejected() {
        let f = TruncatedLoop::constant(crate::loops::real_mat(1.0, 1.0, 0.0, 1.0));
        assert!(matches!(
            sym_bobenko(&f, Orbit::Identity, 0.5),
            Err(Error::NotInRealForm { .. })
        ));
    }

    #[test]
    fn gauss_codazzi_negative_control() {
        let r: Vec<f64> = (0..10).map(|i| 0.1 + 0.05 * i as f64).collect();
        let u = vec![0.0; 10];
        let res = gauss_codazzi_residual(&r, &u, 0.5).unwrap();
        let want = -0.25 + 4.0 / (r[1] * r[1]);
        assert!((res - want).abs() < 1e-12);
        assert!(matches!(
            gauss_codazzi_residual(&r[..4], &u[..4], 0.5),
            Err(Error::GridTooCoarse { points: 4 })
        ));
    }

    #[test]
    fn trivial_grid_connectivity() {
        let g = GridSpec::new(0.1, 0.1, 2, 2);
        let m = build_mesh(FOUR_GAMMA, &g, 0.5, &LoopConfig::default()).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.faces.len(), 1);
        assert_eq!(m.faces[0], [0, 2, 3, 1]);
    }

    #[test]
    fn asymptotic_length_quadrature() {
        let a = FOUR_GAMMA;
        let num = curve_length_with(|r| Ok(-2.0 * (a + 2.0 * r.ln())), 3.0, 20.0).unwrap();
        let exact = asymptotic_curve_length(a, 3.0, 20.0);
        assert!((num - exact).abs() < 1e-8, "{num} vs {exact}");
    }

    #[test]
    fn metric_and_hopf_relations() {
        let (s, _) = surface_point(FOUR_GAMMA, 0.1, 0.7, 0.5, &LoopConfig::default()).unwrap();
        assert!((s.u.exp() - s.k * s.k / 0.5).abs() < 1e-12);
        let z = c(s.z[0], s.z[1]);
        let q = c(s.q[0], s.q[1]);
        assert!((q - c(4.0, 0.0) / z).norm() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn conjugation_by_su11_is_an_isometry(
            a in 0.5..5.0f64, lr in -4.0..0.5f64, th in -3.0..3.0f64,
            al in -1.0..1.0f64, be in -1.0..1.0f64, ph in 0.0..std::f64::consts::TAU,
        ) {
            prop_assume!((a + 2.0 * lr).abs() > 0.1);
            let f = model_iwasawa(a, c(lr, th)).unwrap();
            // g = [[α, β], [β̄, ᾱ]] with |α|² − |β|² = 1
            let beta = Complex64::from_polar(be.abs(), ph);
            let alpha = Complex64::from_polar((1.0 + beta.norm_sqr()).sqrt(), al);
            let g = mat(alpha, beta, beta.conj(), alpha.conj());
            let x = sym_bobenko(&f.f, f.orbit, 0.5).unwrap();
            let y = sym_bobenko(&f.f.left_mul_const(&g), f.orbit, 0.5).unwrap();
            let p = mat(ONE, c(0.0, 0.0), c(0.0, 0.0), I);
            let gh = p * g * p.try_inverse().unwrap();
            let want = gh * chart(&x) * gh.try_inverse().unwrap();
            prop_assert!(max_abs(&(chart(&y) - want)) < 1e-9);
            prop_assert!((minkowski_dot(&x, &x) - minkowski_dot(&y, &y)).abs() < 1e-8 * (1.0 + minkowski_dot(&x, &x).abs()));
        }
    }
}
