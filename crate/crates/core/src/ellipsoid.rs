//! Exterior potentials of an ellipsoidal hull in confocal coordinates.
//!
//! With `f(s) = sqrt((c1²+s)(c2²+s)(c3²+s))` the translational potentials are
//! `φ_i = y_i ξ_i(λ)`, `ξ_i = −Ĉ_i ∫_λ^∞ ds / ((c_i²+s) f)`, and the rotational
//! ones `φ̃_i = y_j y_k ξ̃_i(λ)`, `ξ̃_i = −C̃_i ∫_λ^∞ ds / ((c_j²+s)(c_k²+s) f)`
//! with `(i, j, k)` cyclic. Axis indices are zero-based throughout.
//!
//! Normals stored here point out of the body. The fluid-domain normal is their
//! negative; Neumann conditions `∂φ_i/∂n = n_i`, `∂φ̃_i/∂n = (y×n)_i` read the
//! same with either sign.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{e, V3};
use crate::quad;

/// Relative tolerance of the elliptic integrals.
pub const QUAD_RTOL: f64 = 1e-13;
/// Construction fails when `|2 − α_i|` or `|2 − β_i|` drops below this.
pub const DENOM_MIN: f64 = 1e-6;
/// Axes closer than this (relative) are treated as equal.
pub const EQUAL_AXES: f64 = 1e-9;
/// Accepted `|Σ y_k²/c_k² − 1|` for boundary evaluations.
pub const ON_BOUNDARY: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct EllipsoidGeometry {
    c: [f64; 3],
    alpha: [f64; 3],
    beta: [f64; 3],
    c_hat: [f64; 3],
    c_tilde: [f64; 3],
}

/// Roots of the confocal cubic, `ν < μ < λ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfocalCoords {
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridNode {
    pub y: V3,
    /// Unit normal pointing out of the body.
    pub normal: V3,
    /// `y × normal`.
    pub arm: V3,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct SurfaceGrid {
    pub nodes: Vec<GridNode>,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl SurfaceGrid {
    pub fn area(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    pub fn flux(&self) -> V3 {
        self.nodes.iter().fold(V3::zeros(), |a, n| a + n.normal * n.weight)
    }

    pub fn moment_flux(&self) -> V3 {
        self.nodes.iter().fold(V3::zeros(), |a, n| a + n.arm * n.weight)
    }

    pub fn integrate<F: Fn(&GridNode) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(n)).sum()
    }
}

fn cyc(i: usize) -> (usize, usize) {
    ((i + 1) % 3, (i + 2) % 3)
}

impl EllipsoidGeometry {
    pub fn new(c1: f64, c2: f64, c3: f64) -> Result<Self> {
        let c = [c1, c2, c3];
        if c.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Geometry(alloc::format!("semi-axes must be positive, got {c:?}")));
        }
        let prod = c1 * c2 * c3;
        let a = [c1 * c1, c2 * c2, c3 * c3];
        let cmax = c1.max(c2).max(c3);
        let lscale = a[0].min(a[1]).min(a[2]);
        let f = |s: f64| ((a[0] + s) * (a[1] + s) * (a[2] + s)).sqrt();
        let mut alpha = [0.0; 3];
        let mut beta = [0.0; 3];
        for i in 0..3 {
            let (j, k) = cyc(i);
            alpha[i] = prod * quad::integrate_to_infinity(|s| 1.0 / ((a[i] + s) * f(s)), 0.0, lscale, QUAD_RTOL)?;
            beta[i] = prod
                * (a[j] + a[k])
                * quad::integrate_to_infinity(|s| 1.0 / ((a[j] + s) * (a[k] + s) * f(s)), 0.0, lscale, QUAD_RTOL)?;
        }
        let mut c_hat = [0.0; 3];
        let mut c_tilde = [0.0; 3];
        for i in 0..3 {
            let (j, k) = cyc(i);
            if (2.0 - alpha[i]).abs() < DENOM_MIN || (2.0 - beta[i]).abs() < DENOM_MIN {
                return Err(Error::Geometry(alloc::format!(
                    "potential constants undefined: alpha = {alpha:?}, beta = {beta:?}"
                )));
            }
            c_hat[i] = prod / (2.0 - alpha[i]);
            c_tilde[i] = if (c[j] - c[k]).abs() <= EQUAL_AXES * cmax {
                0.0
            } else {
                prod * (a[j] - a[k]) / (2.0 - beta[i])
            };
        }
        Ok(Self { c, alpha, beta, c_hat, c_tilde })
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        Self::new(radius, radius, radius)
    }

    pub fn axes(&self) -> [f64; 3] {
        self.c
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * core::f64::consts::PI * self.c[0] * self.c[1] * self.c[2]
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.alpha[i]
    }

    pub fn beta(&self, i: usize) -> f64 {
        self.beta[i]
    }

    pub fn c_hat(&self, i: usize) -> f64 {
        self.c_hat[i]
    }

    pub fn c_tilde(&self, i: usize) -> f64 {
        self.c_tilde[i]
    }

    fn sq(&self, i: usize) -> f64 {
        self.c[i] * self.c[i]
    }

    pub fn f(&self, s: f64) -> f64 {
        ((self.sq(0) + s) * (self.sq(1) + s) * (self.sq(2) + s)).sqrt()
    }

    /// `Σ y_k² / c_k²`; equals 1 on the hull.
    pub fn level(&self, y: &V3) -> f64 {
        (0..3).map(|k| y[k] * y[k] / self.sq(k)).sum()
    }

    /// Body-outward unit normal at a hull point.
    pub fn normal(&self, y: &V3) -> V3 {
        V3::new(y.x / self.sq(0), y.y / self.sq(1), y.z / self.sq(2)).normalize()
    }

    fn min_sq(&self) -> f64 {
        self.sq(0).min(self.sq(1)).min(self.sq(2))
    }

    pub fn xi(&self, i: usize, lambda: f64) -> Result<f64> {
        let a = self.sq(i);
        let v = quad::integrate_to_infinity(|s| 1.0 / ((a + s) * self.f(s)), lambda, self.min_sq() + lambda, QUAD_RTOL)?;
        Ok(-self.c_hat[i] * v)
    }

    pub fn xi_tilde(&self, i: usize, lambda: f64) -> Result<f64> {
        if self.c_tilde[i] == 0.0 {
            return Ok(0.0);
        }
        let (j, k) = cyc(i);
        let (aj, ak) = (self.sq(j), self.sq(k));
        let v = quad::integrate_to_infinity(
            |s| 1.0 / ((aj + s) * (ak + s) * self.f(s)),
            lambda,
            self.min_sq() + lambda,
            QUAD_RTOL,
        )?;
        Ok(-self.c_tilde[i] * v)
    }

    fn xi_prime(&self, i: usize, lambda: f64) -> f64 {
        self.c_hat[i] / ((self.sq(i) + lambda) * self.f(lambda))
    }

    fn xi_tilde_prime(&self, i: usize, lambda: f64) -> f64 {
        let (j, k) = cyc(i);
        self.c_tilde[i] / ((self.sq(j) + lambda) * (self.sq(k) + lambda) * self.f(lambda))
    }

    /// The three real roots of `Σ y_k²/(c_k²+θ) = 1`.
    pub fn confocal_roots(&self, y: &V3) -> Result<ConfocalCoords> {
        let lev = self.level(y);
        if lev < 1.0 - ON_BOUNDARY {
            return Err(Error::InsideBody { level: lev });
        }
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&p, &q| self.sq(q).partial_cmp(&self.sq(p)).unwrap());
        let a: [f64; 3] = [self.sq(idx[0]), self.sq(idx[1]), self.sq(idx[2])];
        let y2: [f64; 3] = [y[idx[0]] * y[idx[0]], y[idx[1]] * y[idx[1]], y[idx[2]] * y[idx[2]]];
        let g = |t: f64| -> (f64, f64) {
            let mut v = -1.0;
            let mut d = 0.0;
            for k in 0..3 {
                let den = a[k] + t;
                v += y2[k] / den;
                d -= y2[k] / (den * den);
            }
            (v, d)
        };
        let lambda = if lev <= 1.0 + ON_BOUNDARY { 0.0 } else { decreasing_root(&g, 0.0, y.norm_squared()) };
        let mu = decreasing_root(&g, -a[1], -a[2]);
        let nu = decreasing_root(&g, -a[0], -a[1]);
        Ok(ConfocalCoords { lambda, mu, nu })
    }

    fn grad_lambda(&self, y: &V3, lambda: f64) -> V3 {
        let mut num = V3::zeros();
        let mut den = 0.0;
        for k in 0..3 {
            let d = self.sq(k) + lambda;
            num[k] = 2.0 * y[k] / d;
            den += y[k] * y[k] / (d * d);
        }
        num / den
    }

    /// `φ_i` at an exterior point.
    pub fn phi(&self, i: usize, y: &V3) -> Result<f64> {
        let lam = self.confocal_roots(y)?.lambda;
        Ok(y[i] * self.xi(i, lam)?)
    }

    pub fn grad_phi(&self, i: usize, y: &V3) -> Result<V3> {
        let lam = self.confocal_roots(y)?.lambda;
        Ok(e(i) * self.xi(i, lam)? + self.grad_lambda(y, lam) * (y[i] * self.xi_prime(i, lam)))
    }

    /// `φ̃_i` at an exterior point.
    pub fn varphi(&self, i: usize, y: &V3) -> Result<f64> {
        let (j, k) = cyc(i);
        let lam = self.confocal_roots(y)?.lambda;
        Ok(y[j] * y[k] * self.xi_tilde(i, lam)?)
    }

    pub fn grad_varphi(&self, i: usize, y: &V3) -> Result<V3> {
        let (j, k) = cyc(i);
        let lam = self.confocal_roots(y)?.lambda;
        let xt = self.xi_tilde(i, lam)?;
        Ok((e(j) * y[k] + e(k) * y[j]) * xt + self.grad_lambda(y, lam) * (y[j] * y[k] * self.xi_tilde_prime(i, lam)))
    }

    fn check_boundary(&self, y: &V3) -> Result<()> {
        let r = self.level(y) - 1.0;
        if r.abs() > ON_BOUNDARY {
            return Err(Error::OffBoundary { residual: r });
        }
        Ok(())
    }

    fn xi0(&self, i: usize) -> f64 {
        -self.alpha[i] / (2.0 - self.alpha[i])
    }

    fn xi_tilde0(&self, i: usize) -> f64 {
        let (j, k) = cyc(i);
        let prod = self.c[0] * self.c[1] * self.c[2];
        -self.c_tilde[i] * self.beta[i] / (prod * (self.sq(j) + self.sq(k)))
    }

    /// `φ_i = −α_i/(2−α_i)·y_i` on the hull.
    pub fn phi_boundary(&self, i: usize, y: &V3) -> Result<f64> {
        self.check_boundary(y)?;
        Ok(self.xi0(i) * y[i])
    }

    pub fn varphi_boundary(&self, i: usize, y: &V3) -> Result<f64> {
        self.check_boundary(y)?;
        let (j, k) = cyc(i);
        Ok(self.xi_tilde0(i) * y[j] * y[k])
    }

    /// Full gradient of `φ_i` on the hull (exterior limit).
    pub fn grad_phi_boundary(&self, i: usize, y: &V3) -> Result<V3> {
        self.check_boundary(y)?;
        Ok(e(i) * self.xi0(i) + self.grad_lambda(y, 0.0) * (y[i] * self.xi_prime(i, 0.0)))
    }

    pub fn grad_varphi_boundary(&self, i: usize, y: &V3) -> Result<V3> {
        self.check_boundary(y)?;
        let (j, k) = cyc(i);
        Ok((e(j) * y[k] + e(k) * y[j]) * self.xi_tilde0(i)
            + self.grad_lambda(y, 0.0) * (y[j] * y[k] * self.xi_tilde_prime(i, 0.0)))
    }

    /// Tensor grid: Gauss–Legendre in the polar angle, trapezoid in azimuth.
    pub fn surface_grid(&self, n_theta: usize, n_phi: usize) -> Result<SurfaceGrid> {
        if n_theta < 8 || n_phi < 16 || n_phi % 4 != 0 {
            return Err(Error::Config(alloc::format!(
                "surface grid {n_theta}x{n_phi}: need at least 8x16 with azimuth count divisible by 4"
            )));
        }
        let pi = core::f64::consts::PI;
        let (x, w) = quad::gauss_legendre(n_theta);
        let [c1, c2, c3] = self.c;
        let dphi = 2.0 * pi / n_phi as f64;
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        for (xt, wt) in x.iter().zip(&w) {
            let th = 0.5 * pi * (xt + 1.0);
            let (st, ct) = th.sin_cos();
            for k in 0..n_phi {
                let ph = dphi * k as f64;
                let (sp, cp) = ph.sin_cos();
                let y = V3::new(c1 * st * cp, c2 * st * sp, c3 * ct);
                let av = V3::new(c2 * c3 * st * cp, c1 * c3 * st * sp, c1 * c2 * ct) * st;
                let jac = av.norm();
                let normal = av / jac;
                nodes.push(GridNode { y, normal, arm: y.cross(&normal), weight: 0.5 * pi * wt * dphi * jac });
            }
        }
        Ok(SurfaceGrid { nodes, n_theta, n_phi })
    }
}

/// Root of a function decreasing on (lo, hi): safeguarded Newton inside a bisection bracket.
fn decreasing_root<G: Fn(f64) -> (f64, f64)>(g: &G, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let mut t = 0.5 * (a + b);
    for _ in 0..200 {
        let (v, d) = g(t);
        if !v.is_finite() {
            t = 0.5 * (a + b);
            continue;
        }
        if v > 0.0 {
            a = t;
        } else {
            b = t;
        }
        if v == 0.0 {
            break;
        }
        let step = if d < 0.0 { t - v / d } else { f64::NAN };
        let next = if step.is_finite() && step > a && step < b { step } else { 0.5 * (a + b) };
        let done = (next - t).abs() <= 1e-15 * (1.0 + t.abs()) || (b - a).abs() <= 1e-15 * (1.0 + t.abs());
        t = next;
        if done {
            break;
        }
    }
    t
}

pub fn elliptic_alpha(geom: &EllipsoidGeometry, i: usize) -> f64 {
    geom.alpha(i)
}

pub fn elliptic_beta(geom: &EllipsoidGeometry, i: usize) -> f64 {
    geom.beta(i)
}
