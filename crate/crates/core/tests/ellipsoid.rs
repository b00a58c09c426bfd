mod common;

use common::*;
use proptest::prelude::*;
use uvctl_core::ellipsoid::{EllipsoidGeometry, SurfaceGrid};
use uvctl_core::linalg::V3;
use uvctl_core::Error;

const PI: f64 = std::f64::consts::PI;

fn on_hull(g: &EllipsoidGeometry, th: f64, ph: f64) -> V3 {
    let c = g.axes();
    V3::new(c[0] * th.sin() * ph.cos(), c[1] * th.sin() * ph.sin(), c[2] * th.cos())
}

#[test]
fn carlson_oracle_self_check() {
    // R_G(x,x,x) = sqrt(x); area of unit sphere
    assert!((carlson_rg(2.0, 2.0, 2.0) - 2f64.sqrt()).abs() < 1e-14);
    assert!((ellipsoid_area(1.0, 1.0, 1.0) - 4.0 * PI).abs() < 1e-12);
    // prolate spheroid closed form
    let (a, c) = (1.0f64, 2.0f64);
    let ecc = (1.0 - a * a / (c * c)).sqrt();
    let want = 2.0 * PI * a * a * (1.0 + c / (a * ecc) * ecc.asin());
    assert!((ellipsoid_area(a, a, c) - want).abs() < 1e-12 * want);
}

#[test]
fn sphere_alpha_is_two_thirds() {
    for a in [0.3, 1.0, 2.5] {
        let g = EllipsoidGeometry::sphere(a).unwrap();
        for i in 0..3 {
            assert!((g.alpha(i) - 2.0 / 3.0).abs() < 1e-11);
            assert!((g.beta(i) - 0.8).abs() < 1e-11);
            assert_eq!(g.c_tilde(i), 0.0);
        }
    }
}

#[test]
fn alpha_matches_carlson() {
    let mut r = rng(7);
    for _ in 0..20 {
        let c = [uniform(&mut r, 0.5, 2.0), uniform(&mut r, 0.5, 2.0), uniform(&mut r, 0.5, 2.0)];
        let g = EllipsoidGeometry::new(c[0], c[1], c[2]).unwrap();
        for i in 0..3 {
            assert!((g.alpha(i) - alpha_oracle(c, i)).abs() < 1e-11, "{c:?} {i}");
        }
    }
}

#[test]
fn beta_from_alpha_differences() {
    // ∫ ds/((c2²+s)(c3²+s)f) splits into the α integrals by partial fractions.
    let c = [1.2, 1.0, 0.8];
    let g = EllipsoidGeometry::new(c[0], c[1], c[2]).unwrap();
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let (aj, ak) = (c[j] * c[j], c[k] * c[k]);
        let want = (aj + ak) * (g.alpha(j) - g.alpha(k)) / (ak - aj);
        assert!((g.beta(i) - want).abs() < 1e-11);
        assert!(g.beta(i) > 0.0 && g.beta(i) < 2.0 && (2.0 - g.beta(i)).abs() > 1e-6);
    }
}

#[test]
fn beta_step_halving_consistency() {
    let c = [1.2f64, 1.0, 0.8];
    let g = EllipsoidGeometry::new(c[0], c[1], c[2]).unwrap();
    let prod = c[0] * c[1] * c[2];
    let f = |s: f64| ((c[0] * c[0] + s) * (c[1] * c[1] + s) * (c[2] * c[2] + s)).sqrt();
    let integrand = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let s = 0.64 * t / (1.0 - t);
        let jac = 0.64 / ((1.0 - t) * (1.0 - t));
        prod * (c[1] * c[1] + c[2] * c[2]) / ((c[1] * c[1] + s) * (c[2] * c[2] + s) * f(s)) * jac
    };
    let coarse = uvctl_core::quad::composite_gl(integrand, 0.0, 1.0, 400, 10);
    let fine = uvctl_core::quad::composite_gl(integrand, 0.0, 1.0, 800, 10);
    assert!((coarse - fine).abs() < 1e-9 * fine);
    assert!((g.beta(0) - fine).abs() < 1e-9 * fine);
}

#[test]
fn near_sphere_beta_limit() {
    let g = EllipsoidGeometry::new(1.001, 1.0, 0.999).unwrap();
    for i in 0..3 {
        assert!(g.beta(i) > 0.799 && g.beta(i) < 0.801);
    }
}

#[test]
fn alpha_bracket() {
    let c = [1.2, 1.0, 0.8];
    let g = EllipsoidGeometry::new(c[0], c[1], c[2]).unwrap();
    let lo = 2.0 * c[1] * c[2] / (3.0 * c[0] * c[0]);
    let hi = 2.0 * c[0] * c[1] / (3.0 * c[2] * c[2]);
    for i in 0..3 {
        assert!(g.alpha(i) >= lo && g.alpha(i) <= hi);
    }
}

#[test]
fn rejects_bad_axes() {
    assert!(matches!(EllipsoidGeometry::new(1.0, -1.0, 1.0), Err(Error::Geometry(_))));
    assert!(EllipsoidGeometry::new(1.0, f64::NAN, 1.0).is_err());
}

#[test]
fn confocal_sphere_example() {
    let g = EllipsoidGeometry::new(1.0 + 1e-12, 1.0, 1.0 - 1e-12).unwrap();
    let cc = g.confocal_roots(&V3::new(2.0, 0.0, 0.0)).unwrap();
    assert!((cc.lambda - 3.0).abs() < 1e-9);
}

#[test]
fn confocal_boundary_and_residual() {
    let g = EllipsoidGeometry::new(1.2, 1.0, 0.8).unwrap();
    let y = on_hull(&g, 0.7, 2.1);
    assert!(g.confocal_roots(&y).unwrap().lambda.abs() < 1e-9);
    let mut r = rng(3);
    let a = [1.44, 1.0, 0.64];
    for _ in 0..200 {
        let dir = V3::new(uniform(&mut r, -1.0, 1.0), uniform(&mut r, -1.0, 1.0), uniform(&mut r, -1.0, 1.0));
        let y = dir.normalize() * uniform(&mut r, 1.3, 6.0);
        let cc = g.confocal_roots(&y).unwrap();
        assert!(cc.nu < cc.mu && cc.mu < cc.lambda);
        assert!(cc.lambda > -a[2] && cc.mu > -a[1] && cc.mu < -a[2] && cc.nu > -a[0] && cc.nu < -a[1]);
        for th in [cc.lambda, cc.mu, cc.nu] {
            let p = (a[0] + th) * (a[1] + th) * (a[2] + th)
                - y.x * y.x * (a[1] + th) * (a[2] + th)
                - y.y * y.y * (a[0] + th) * (a[2] + th)
                - y.z * y.z * (a[0] + th) * (a[1] + th);
            assert!(p.abs() <= 1e-10 * (1.0 + th.abs()).powi(3), "residual {p} at {th}");
        }
    }
}

#[test]
fn interior_point_rejected() {
    let g = EllipsoidGeometry::new(1.2, 1.0, 0.8).unwrap();
    assert!(matches!(g.confocal_roots(&V3::new(0.1, 0.1, 0.1)), Err(Error::InsideBody { .. })));
    assert!(matches!(g.phi_boundary(0, &V3::new(2.0, 0.0, 0.0)), Err(Error::OffBoundary { .. })));
}

#[test]
fn sphere_traces_and_dipole_gradient() {
    let g = EllipsoidGeometry::sphere(1.0).unwrap();
    let mut r = rng(11);
    for _ in 0..50 {
        let y = on_hull(&g, uniform(&mut r, 0.0, PI), uniform(&mut r, 0.0, 2.0 * PI));
        for i in 0..3 {
            assert!((g.phi_boundary(i, &y).unwrap() + 0.5 * y[i]).abs() < 1e-12);
            assert_eq!(g.varphi_boundary(i, &y).unwrap(), 0.0);
            // exterior dipole −(1/2) y_i/|y|³ has gradient −(1/2)(e_i − 3 y_i y) on |y| = 1
            let mut ei = V3::zeros();
            ei[i] = 1.0;
            let want = (ei - y * (3.0 * y[i])) * -0.5;
            assert!((g.grad_phi_boundary(i, &y).unwrap() - want).norm() < 1e-11);
        }
    }
}

#[test]
fn parity_relations() {
    let g = EllipsoidGeometry::new(1.3, 1.0, 0.7).unwrap();
    let mut r = rng(5);
    for _ in 0..50 {
        let y = on_hull(&g, uniform(&mut r, 0.0, PI), uniform(&mut r, 0.0, 2.0 * PI));
        for p in 0..3 {
            let mut sy = y;
            sy[p] = -sy[p];
            for i in 0..3 {
                let s = if i == p { -1.0 } else { 1.0 };
                let a = g.phi_boundary(i, &y).unwrap();
                assert!((g.phi_boundary(i, &sy).unwrap() - s * a).abs() < 1e-12);
                let b = g.varphi_boundary(i, &y).unwrap();
                assert!((g.varphi_boundary(i, &sy).unwrap() + s * b).abs() < 1e-12);
                let mut gs = g.grad_phi_boundary(i, &y).unwrap();
                gs[p] = -gs[p];
                assert!((g.grad_phi_boundary(i, &sy).unwrap() - gs * s).norm() < 1e-12);
                let mut gv = g.grad_varphi_boundary(i, &y).unwrap();
                gv[p] = -gv[p];
                assert!((g.grad_varphi_boundary(i, &sy).unwrap() + gv * s).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn neumann_contract_on_grid() {
    let g = EllipsoidGeometry::new(1.2, 1.0, 0.8).unwrap();
    let grid = g.surface_grid(64, 128).unwrap();
    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    for n in &grid.nodes {
        for i in 0..3 {
            e1 = e1.max((g.grad_phi_boundary(i, &n.y).unwrap().dot(&n.normal) - n.normal[i]).abs());
            e2 = e2.max((g.grad_varphi_boundary(i, &n.y).unwrap().dot(&n.normal) - n.arm[i]).abs());
        }
    }
    assert!(e1 <= 1e-8, "{e1}");
    assert!(e2 <= 1e-7, "{e2}");
}

#[test]
fn exterior_potential_meets_boundary_trace() {
    let g = EllipsoidGeometry::new(1.2, 1.0, 0.8).unwrap();
    let y = on_hull(&g, 1.1, 0.4);
    for i in 0..3 {
        let a = g.phi(i, &y).unwrap();
        assert!((a - g.phi_boundary(i, &y).unwrap()).abs() < 1e-10);
        let b = g.varphi(i, &y).unwrap();
        assert!((b - g.varphi_boundary(i, &y).unwrap()).abs() < 1e-10);
        assert!((g.grad_phi(i, &y).unwrap() - g.grad_phi_boundary(i, &y).unwrap()).norm() < 1e-9);
    }
}

#[test]
fn exterior_gradient_matches_differences() {
    let g = EllipsoidGeometry::new(1.2, 1.0, 0.8).unwrap();
    let y = V3::new(1.1, 0.9, -0.7);
    let h = 1e-5;
    for i in 0..3 {
        let mut fd = V3::zeros();
        let mut fdt = V3::zeros();
        for k in 0..3 {
            let mut d = V3::zeros();
            d[k] = h;
            fd[k] = (g.phi(i, &(y + d)).unwrap() - g.phi(i, &(y - d)).unwrap()) / (2.0 * h);
            fdt[k] = (g.varphi(i, &(y + d)).unwrap() - g.varphi(i, &(y - d)).unwrap()) / (2.0 * h);
        }
        assert!((fd - g.grad_phi(i, &y).unwrap()).norm() < 1e-8);
        assert!((fdt - g.grad_varphi(i, &y).unwrap()).norm() < 1e-8);
    }
}

#[test]
fn potentials_are_harmonic() {
    let g = EllipsoidGeometry::new(1.2, 1.0, 0.8).unwrap();
    let h = 1e-3;
    for y in [V3::new(1.5, 0.3, 0.2), V3::new(-0.4, 1.4, 0.9), V3::new(0.8, -0.8, 1.1)] {
        for i in 0..3 {
            let fs: [&dyn Fn(&V3) -> f64; 2] = [&|p| g.phi(i, p).unwrap(), &|p| g.varphi(i, p).unwrap()];
            for f in fs {
                let mut lap = -6.0 * f(&y);
                for k in 0..3 {
                    let mut d = V3::zeros();
                    d[k] = h;
                    lap += f(&(y + d)) + f(&(y - d));
                }
                lap /= h * h;
                assert!(lap.abs() <= 1e-5, "laplacian {lap}");
            }
        }
    }
}

#[test]
fn gradient_decays_like_inverse_square() {
    let g = EllipsoidGeometry::new(1.2, 1.0, 0.8).unwrap();
    let dir = V3::new(0.6, 0.5, 0.62).normalize();
    let rs: Vec<f64> = (0..8).map(|k| 5.0 * 10f64.powf(k as f64 / 7.0)).collect();
    for i in 0..3 {
        let mags: Vec<f64> = rs.iter().map(|r| g.grad_phi(i, &(dir * *r)).unwrap().norm()).collect();
        assert!(-loglog_slope(&rs, &mags) >= 1.9);
        let magt: Vec<f64> = rs.iter().map(|r| g.grad_varphi(i, &(dir * *r)).unwrap().norm()).collect();
        assert!(-loglog_slope(&rs, &magt) >= 1.9);
    }
}

fn grid_checks(g: &EllipsoidGeometry, grid: &SurfaceGrid) {
    let c = g.axes();
    let area = grid.area();
    let want = ellipsoid_area(c[0], c[1], c[2]);
    assert!((area - want).abs() < 1e-3 * want);
    assert!(grid.flux().norm() < 1e-8 * area);
    assert!(grid.moment_flux().norm() < 1e-8 * area * c[0].max(c[1]).max(c[2]));
}

#[test]
fn surface_grid_invariants() {
    let s = EllipsoidGeometry::sphere(1.0).unwrap();
    grid_checks(&s, &s.surface_grid(32, 64).unwrap());
    let g = EllipsoidGeometry::new(1.2, 1.0, 0.8).unwrap();
    grid_checks(&g, &g.surface_grid(16, 32).unwrap());
    assert!(g.surface_grid(4, 16).is_err());
}

#[test]
fn grid_refinement_reduces_error() {
    let g = EllipsoidGeometry::new(1.8, 1.0, 0.6).unwrap();
    let want = ellipsoid_area(1.8, 1.0, 0.6);
    let e1 = (g.surface_grid(8, 16).unwrap().area() - want).abs();
    let e2 = (g.surface_grid(16, 32).unwrap().area() - want).abs();
    assert!(e2 <= 0.5 * e1, "{e1} {e2}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn alpha_sum_rule(c1 in 0.5f64..2.0, c2 in 0.5f64..2.0, c3 in 0.5f64..2.0) {
        let g = EllipsoidGeometry::new(c1, c2, c3).unwrap();
        prop_assert!((g.alpha(0) + g.alpha(1) + g.alpha(2) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn scaling_leaves_alpha_unchanged(c1 in 0.5f64..2.0, c2 in 0.5f64..2.0, s in 0.2f64..5.0) {
        let a = EllipsoidGeometry::new(c1, c2, 1.0).unwrap();
        let b = EllipsoidGeometry::new(s * c1, s * c2, s).unwrap();
        for i in 0..3 {
            prop_assert!((a.alpha(i) - b.alpha(i)).abs() < 1e-11);
            prop_assert!((a.beta(i) - b.beta(i)).abs() < 1e-11);
        }
    }
}
