//! Unit quaternions, the rotation map, and the vector-part chart of the
//! upper hemisphere of S³.

use core::ops::{Add, Mul, Neg};

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{M3, V3};

/// Tolerance on `|‖q‖ − 1|` accepted by operations that require a unit quaternion.
pub const UNIT_TOL: f64 = 1e-9;
/// Chart lift rejects `‖qv‖ ≥ 1 − CHART_MARGIN`.
pub const CHART_MARGIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quaternion {
    pub q0: f64,
    pub qv: V3,
}

impl Quaternion {
    pub const fn new(q0: f64, q1: f64, q2: f64, q3: f64) -> Self {
        Self { q0, qv: V3::new(q1, q2, q3) }
    }

    pub fn from_parts(q0: f64, qv: V3) -> Self {
        Self { q0, qv }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    /// Pure quaternion `[0, v]`.
    pub fn pure(v: V3) -> Self {
        Self { q0: 0.0, qv: v }
    }

    pub fn conj(&self) -> Self {
        Self { q0: self.q0, qv: -self.qv }
    }

    pub fn norm(&self) -> f64 {
        (self.q0 * self.q0 + self.qv.norm_squared()).sqrt()
    }

    pub fn normalize(&self) -> Self {
        let n = self.norm();
        Self { q0: self.q0 / n, qv: self.qv / n }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { q0: self.q0 * s, qv: self.qv * s }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.q0, self.qv.x, self.qv.y, self.qv.z]
    }

    pub fn check_unit(&self) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > UNIT_TOL || !n.is_finite() {
            return Err(Error::InvalidAttitude { norm: n });
        }
        Ok(())
    }

    /// Rotation `α` about unit `axis`: `[cos(α/2), sin(α/2)·axis]`.
    pub fn from_angle_axis(alpha: f64, axis: &V3) -> Self {
        let (s, c) = (0.5 * alpha).sin_cos();
        Self { q0: c, qv: axis.normalize() * s }
    }

    /// Inverse of [`Quaternion::from_angle_axis`] with `α ∈ [0, 2π]`; axis `e₁` when `|q0| = 1`.
    pub fn to_angle_axis(&self) -> (f64, V3) {
        let q = self.normalize();
        let s = q.qv.norm();
        if s == 0.0 {
            let alpha = if q.q0 > 0.0 { 0.0 } else { 2.0 * core::f64::consts::PI };
            return (alpha, V3::x());
        }
        (2.0 * s.atan2(q.q0), q.qv / s)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, q: Quaternion) -> Quaternion {
        qmul(&self, &q)
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, q: Quaternion) -> Quaternion {
        Quaternion { q0: self.q0 + q.q0, qv: self.qv + q.qv }
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        self.scale(-1.0)
    }
}

/// `[p0, p]∗[q0, q] = [p0q0 − p·q, p0q + q0p + p×q]`.
pub fn qmul(p: &Quaternion, q: &Quaternion) -> Quaternion {
    Quaternion {
        q0: p.q0 * q.q0 - p.qv.dot(&q.qv),
        qv: q.qv * p.q0 + p.qv * q.q0 + p.qv.cross(&q.qv),
    }
}

/// `q ∗ v ∗ q*` for unit `q`.
pub fn rotate(q: &Quaternion, v: &V3) -> Result<V3> {
    q.check_unit()?;
    Ok(rotate_unchecked(q, v))
}

pub(crate) fn rotate_unchecked(q: &Quaternion, v: &V3) -> V3 {
    (*q * Quaternion::pure(*v) * q.conj()).qv
}

pub fn to_rotation_matrix(q: &Quaternion) -> Result<M3> {
    q.check_unit()?;
    Ok(rotation_matrix_unchecked(q))
}

pub(crate) fn rotation_matrix_unchecked(q: &Quaternion) -> M3 {
    let (a, b, c, d) = (q.q0, q.qv.x, q.qv.y, q.qv.z);
    M3::new(
        a * a + b * b - c * c - d * d,
        2.0 * (b * c - a * d),
        2.0 * (b * d + a * c),
        2.0 * (b * c + a * d),
        a * a - b * b + c * c - d * d,
        2.0 * (c * d - a * b),
        2.0 * (b * d - a * c),
        2.0 * (c * d + a * b),
        a * a - b * b - c * c + d * d,
    )
}

/// `q' = ½ q ∗ [0, r]`.
pub fn attitude_rhs(q: &Quaternion, r: &V3) -> Quaternion {
    (*q * Quaternion::pure(*r)).scale(0.5)
}

/// Vector part of a quaternion in the upper hemisphere `q0 > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VectorChart(pub V3);

impl VectorChart {
    pub fn new(qv: V3) -> Result<Self> {
        let c = VectorChart(qv);
        c.q0()?;
        Ok(c)
    }

    pub fn q0(&self) -> Result<f64> {
        let n2 = self.0.norm_squared();
        if n2.sqrt() >= 1.0 - CHART_MARGIN || !n2.is_finite() {
            return Err(Error::ChartDomain { norm: n2.sqrt() });
        }
        Ok((1.0 - n2).sqrt())
    }

    pub fn lift(&self) -> Result<Quaternion> {
        Ok(Quaternion::from_parts(self.q0()?, self.0))
    }

    /// Chart coordinates of `q` or `−q`, whichever has positive scalar part.
    pub fn project(q: &Quaternion) -> Result<Self> {
        let q = q.normalize();
        let qv = if q.q0 < 0.0 { -q.qv } else { q.qv };
        Self::new(qv)
    }
}

/// Chart form of the kinematics: returns `(q⃗', h')`.
///
/// `q⃗' = ½(q0 r + q⃗×r)` and
/// `h' = (1−|q⃗|²) l + 2 q0 q⃗×l + (l·q⃗) q⃗ − (q⃗×l)×q⃗`.
pub fn chart_rhs(qv: &VectorChart, r: &V3, l: &V3) -> Result<(V3, V3)> {
    let q0 = qv.q0()?;
    let v = qv.0;
    let vdot = (r * q0 + v.cross(r)) * 0.5;
    let vxl = v.cross(l);
    let hdot = l * (1.0 - v.norm_squared()) + vxl * (2.0 * q0) + v * l.dot(&v) - vxl.cross(&v);
    Ok((vdot, hdot))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ij_is_k() {
        let i = Quaternion::new(0.0, 1.0, 0.0, 0.0);
        let j = Quaternion::new(0.0, 0.0, 1.0, 0.0);
        let k = Quaternion::new(0.0, 0.0, 0.0, 1.0);
        assert_eq!(i * j, k);
        assert_eq!(j * i, -k);
    }

    #[test]
    fn quarter_turn_about_e3() {
        let h = core::f64::consts::FRAC_PI_4;
        let q = Quaternion::new(h.cos(), 0.0, 0.0, h.sin());
        let v = rotate(&q, &V3::x()).unwrap();
        assert!((v - V3::y()).norm() < 1e-12);
    }

    #[test]
    fn half_turn_matrix() {
        let q = Quaternion::new(0.0, 0.0, 0.0, 1.0);
        let r = to_rotation_matrix(&q).unwrap();
        assert!((r - M3::from_diagonal(&V3::new(-1.0, -1.0, 1.0))).norm() < 1e-15);
    }

    #[test]
    fn non_unit_rejected() {
        let q = Quaternion::new(1.0, 0.1, 0.0, 0.0);
        assert!(matches!(rotate(&q, &V3::x()), Err(Error::InvalidAttitude { .. })));
    }

    #[test]
    fn attitude_rate_example() {
        let d = attitude_rhs(&Quaternion::identity(), &V3::new(0.0, 0.0, 2.0));
        assert_eq!(d, Quaternion::new(0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn chart_identity() {
        let r = V3::new(0.3, -0.2, 0.1);
        let l = V3::new(1.0, 2.0, 3.0);
        let (vd, hd) = chart_rhs(&VectorChart(V3::zeros()), &r, &l).unwrap();
        assert_eq!(vd, r * 0.5);
        assert_eq!(hd, l);
    }

    #[test]
    fn chart_boundary_rejected() {
        assert!(VectorChart::new(V3::new(1.0, 0.0, 0.0)).is_err());
        assert!(chart_rhs(&VectorChart(V3::new(0.6, 0.8, 0.0)), &V3::x(), &V3::x()).is_err());
    }

    #[test]
    fn angle_axis_tie_convention() {
        let (a, ax) = Quaternion::identity().to_angle_axis();
        assert_eq!(a, 0.0);
        assert_eq!(ax, V3::x());
        let q = Quaternion::from_angle_axis(1.2, &V3::new(0.0, 3.0, 4.0));
        let (a, ax) = q.to_angle_axis();
        assert!((a - 1.2).abs() < 1e-14);
        assert!((ax - V3::new(0.0, 0.6, 0.8)).norm() < 1e-14);
    }
}
