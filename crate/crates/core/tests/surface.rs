use num_complex::Complex64;
use ttstar::factorization::{homogeneity_defect, Orbit};
use ttstar::geometry::{
    build_mesh, factor_point, gauss_codazzi_relative, gauss_codazzi_residual, minkowski_dot,
    radial_u, surface_point, GridSpec, H_DEFAULT,
};
use ttstar::qc_frames::FramePoint;
use ttstar::{DoubleF64, LoopConfig, Real};

fn four_gamma() -> f64 {
    DoubleF64::four_gamma().to_f64()
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Point of the immersion at z = x + iy.
fn immersion(a: f64, x: f64, y: f64) -> [f64; 3] {
    let z = Complex64::new(x, y);
    surface_point(a, z.norm(), z.arg(), H_DEFAULT, &LoopConfig::default())
        .unwrap()
        .0
        .point
}

struct Patch {
    e: f64,
    f: f64,
    g: f64,
    u: f64,
    h: f64,
}

fn patch(a: f64, x: f64, y: f64, step: f64) -> Patch {
    let p = |i: i32, j: i32| immersion(a, x + i as f64 * step, y + j as f64 * step);
    let c = p(0, 0);
    let xu = scale(sub(p(1, 0), p(-1, 0)), 0.5 / step);
    let xv = scale(sub(p(0, 1), p(0, -1)), 0.5 / step);
    let xuu = scale(sub(sub(p(1, 0), c), sub(c, p(-1, 0))), 1.0 / (step * step));
    let xvv = scale(sub(sub(p(0, 1), c), sub(c, p(0, -1))), 1.0 / (step * step));
    // cross product with the last component negated is ⟨·,·⟩-orthogonal to both
    let n = [
        xu[1] * xv[2] - xu[2] * xv[1],
        xu[2] * xv[0] - xu[0] * xv[2],
        -(xu[0] * xv[1] - xu[1] * xv[0]),
    ];
    let n = scale(n, 1.0 / (-minkowski_dot(&n, &n)).sqrt());
    let e = minkowski_dot(&xu, &xu);
    let g = minkowski_dot(&xv, &xv);
    let f = minkowski_dot(&xu, &xv);
    let l = minkowski_dot(&xuu, &n);
    let m = minkowski_dot(&xvv, &n);
    let z = Complex64::new(x, y);
    let (s, _) = surface_point(a, z.norm(), z.arg(), H_DEFAULT, &LoopConfig::default()).unwrap();
    Patch { e, f, g, u: s.u, h: (l + m) / (2.0 * e) }
}

#[test]
fn immersion_is_conformal_with_constant_mean_curvature() {
    for (x, y) in [(0.2, 0.1), (0.05, -0.3), (-0.15, 0.2)] {
        let p = patch(four_gamma(), x, y, 1e-4);
        let metric = 4.0 * (2.0 * p.u).exp();
        assert!((p.e - p.g).abs() / p.e < 1e-3, "E = {}, G = {}", p.e, p.g);
        assert!(p.f.abs() / p.e < 1e-3, "F = {}", p.f);
        assert!((p.e - metric).abs() / metric < 1e-3);
        // the sign of H depends on the choice of unit normal
        assert!((p.h.abs() - H_DEFAULT).abs() < 5e-2, "H = {}", p.h);
    }
}

#[test]
fn b_is_homogeneous() {
    let cfg = LoopConfig::default();
    let a = four_gamma();
    for eps in [Complex64::i(), Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_3)] {
        for z in [Complex64::new(0.05, 0.0), Complex64::from_polar(0.2, std::f64::consts::FRAC_PI_4)] {
            let b_z = factor_point(&FramePoint::new(z, a).unwrap(), &cfg).unwrap();
            let b_e = factor_point(&FramePoint::new(eps * eps * z, a).unwrap(), &cfg).unwrap();
            let d = homogeneity_defect(&b_z.b, &b_e.b, eps);
            assert!(d < 1e-8, "eps = {eps}, z = {z}: {d:e}");
        }
    }
}

#[test]
fn k_depends_only_on_modulus() {
    let cfg = LoopConfig::default();
    for a in [four_gamma(), 1.0] {
        for r in [0.03, 0.3] {
            let k0 = factor_point(&FramePoint::polar(r, 0.0, a).unwrap(), &cfg).unwrap().k;
            for j in 0..32 {
                let th = -std::f64::consts::PI + (j as f64 + 0.5) * std::f64::consts::TAU / 32.0;
                let k = factor_point(&FramePoint::polar(r, th, a).unwrap(), &cfg).unwrap().k;
                assert!((k - k0).abs() < 1e-8 * k0, "a = {a}, r = {r}, θ = {th}");
            }
        }
    }
}

#[test]
fn gauss_codazzi_converges_quadratically() {
    let cfg = LoopConfig::default();
    let a = four_gamma();
    let mut res = Vec::new();
    for n in [400, 800] {
        let r: Vec<f64> = (0..n).map(|i| 0.01 + 0.39 * i as f64 / (n - 1) as f64).collect();
        let u = radial_u(a, &r, H_DEFAULT, &cfg).unwrap();
        res.push(gauss_codazzi_residual(&r, &u, H_DEFAULT).unwrap());
        assert!(gauss_codazzi_relative(&r, &u, H_DEFAULT).unwrap() < 5e-2);
    }
    let ratio = res[0] / res[1];
    assert!((3.0..5.0).contains(&ratio), "{res:?}");
}

#[test]
fn small_meshes() {
    let cfg = LoopConfig::default();
    let grid = GridSpec::new(0.02, 0.4, 12, 9);
    let m = build_mesh(four_gamma(), &grid, H_DEFAULT, &cfg).unwrap();
    assert_eq!(m.singular_count(), 0);
    assert_eq!(m.flagged_count(), 0);
    assert_eq!(m.faces.len(), 11 * 8);
    assert!(m.reflection_defect() < 1e-6);
    assert!(m.vertices.iter().all(|v| v.sample.unwrap().orbit == Orbit::W));

    // for a = 1 the grid crosses an orbit change
    let m = build_mesh(1.0, &GridSpec::new(0.05, 0.9, 12, 5), H_DEFAULT, &cfg).unwrap();
    assert!(m.flagged_count() > 0);
    assert!(!m.dropped_faces.is_empty());
}
