//! Controlled rigid-body motion in the fluid.

use alloc::boxed::Box;
use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector, U6};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::hydro::HydroMatrices;
use crate::linalg::{block6, skew, split6, stack6, M3, M6, V12, V3, V6};
use crate::mesh::PanelMesh;
use crate::quat::{attitude_rhs, chart_rhs, rotation_matrix_unchecked, Quaternion, VectorChart};

/// States with any component above this magnitude count as blown up.
pub const BLOWUP: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleState {
    pub h: V3,
    pub q: Quaternion,
    pub l: V3,
    pub r: V3,
}

impl VehicleState {
    pub fn rest() -> Self {
        Self { h: V3::zeros(), q: Quaternion::identity(), l: V3::zeros(), r: V3::zeros() }
    }

    pub fn check(&self) -> Result<()> {
        self.q.check_unit()?;
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::Config("non-finite state".into()));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 13] {
        let q = self.q.to_array();
        [
            self.h.x, self.h.y, self.h.z, q[0], q[1], q[2], q[3], self.l.x, self.l.y, self.l.z, self.r.x, self.r.y, self.r.z,
        ]
    }

    pub fn from_array(a: &[f64; 13]) -> Self {
        Self {
            h: V3::new(a[0], a[1], a[2]),
            q: Quaternion::new(a[3], a[4], a[5], a[6]),
            l: V3::new(a[7], a[8], a[9]),
            r: V3::new(a[10], a[11], a[12]),
        }
    }

    /// Chart coordinates `(h, q⃗, l, r)`.
    pub fn to_chart(&self) -> Result<V12> {
        let v = VectorChart::project(&self.q)?.0;
        let mut x = V12::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.h);
        x.fixed_rows_mut::<3>(3).copy_from(&v);
        x.fixed_rows_mut::<3>(6).copy_from(&self.l);
        x.fixed_rows_mut::<3>(9).copy_from(&self.r);
        Ok(x)
    }

    pub fn from_chart(x: &V12) -> Result<Self> {
        let q = VectorChart::new(x.fixed_rows::<3>(3).into_owned())?.lift()?;
        Ok(Self { h: x.fixed_rows::<3>(0).into_owned(), q, l: x.fixed_rows::<3>(6).into_owned(), r: x.fixed_rows::<3>(9).into_owned() })
    }
}

/// Control amplitudes `w(t)` with their exact time derivatives.
pub trait ControlSignal {
    fn channels(&self) -> usize;
    fn value(&self, t: f64) -> DVector<f64>;
    fn rate(&self, t: f64) -> DVector<f64>;
}

pub struct ZeroSignal(pub usize);

impl ControlSignal for ZeroSignal {
    fn channels(&self) -> usize {
        self.0
    }
    fn value(&self, _: f64) -> DVector<f64> {
        DVector::zeros(self.0)
    }
    fn rate(&self, _: f64) -> DVector<f64> {
        DVector::zeros(self.0)
    }
}

/// Channels given as closures `t ↦ (w, ẇ)`.
pub struct FnSignal {
    channels: Vec<Box<dyn Fn(f64) -> (f64, f64)>>,
}

impl FnSignal {
    pub fn new(channels: Vec<Box<dyn Fn(f64) -> (f64, f64)>>) -> Self {
        Self { channels }
    }
}

impl ControlSignal for FnSignal {
    fn channels(&self) -> usize {
        self.channels.len()
    }
    fn value(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.channels.len(), self.channels.iter().map(|f| f(t).0))
    }
    fn rate(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.channels.len(), self.channels.iter().map(|f| f(t).1))
    }
}

/// Piecewise cubic Hermite signal through knots with prescribed values and slopes.
#[derive(Clone, Debug)]
pub struct HermiteSignal {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
    pub rates: Vec<DVector<f64>>,
}

impl HermiteSignal {
    pub fn new(times: Vec<f64>, values: Vec<DVector<f64>>, rates: Vec<DVector<f64>>) -> Result<Self> {
        if times.len() < 2 || values.len() != times.len() || rates.len() != times.len() {
            return Err(Error::Config("Hermite signal needs matching knots, values and rates".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("Hermite knots must increase".into()));
        }
        Ok(Self { times, values, rates })
    }

    fn locate(&self, t: f64) -> (usize, f64, f64) {
        let n = self.times.len();
        let k = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap_or(core::cmp::Ordering::Less)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let h = self.times[k + 1] - self.times[k];
        (k, h, (t - self.times[k]) / h)
    }
}

impl ControlSignal for HermiteSignal {
    fn channels(&self) -> usize {
        self.values[0].len()
    }
    fn value(&self, t: f64) -> DVector<f64> {
        let (k, h, s) = self.locate(t);
        let (h00, h10, h01, h11) = (
            2.0 * s.powi(3) - 3.0 * s * s + 1.0,
            s.powi(3) - 2.0 * s * s + s,
            -2.0 * s.powi(3) + 3.0 * s * s,
            s.powi(3) - s * s,
        );
        &self.values[k] * h00 + &self.rates[k] * (h * h10) + &self.values[k + 1] * h01 + &self.rates[k + 1] * (h * h11)
    }
    fn rate(&self, t: f64) -> DVector<f64> {
        let (k, h, s) = self.locate(t);
        let (d00, d10, d01, d11) = (6.0 * s * s - 6.0 * s, 3.0 * s * s - 4.0 * s + 1.0, -6.0 * s * s + 6.0 * s, 3.0 * s * s - 2.0 * s);
        (&self.values[k] * d00 + &self.values[k + 1] * d01) / h + &self.rates[k] * d10 + &self.rates[k + 1] * d11
    }
}

/// Time derivative of a [`VehicleState`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateRate {
    pub h: V3,
    pub q: Quaternion,
    pub l: V3,
    pub r: V3,
}

/// Hydrodynamic plant with a cached factorization of `𝒥`.
pub struct Plant {
    hm: HydroMatrices,
    chol: Cholesky<f64, U6>,
    g: Vec<M6>,
    w: Vec<DMatrix<f64>>,
}

impl Plant {
    pub fn new(hm: &HydroMatrices) -> Result<Self> {
        let chol = hm.jscript.cholesky().ok_or_else(|| Error::Assembly("𝒥 is not positive definite".into()))?;
        let g = (0..hm.ports()).map(|p| hm.g(p)).collect();
        let w = (0..hm.ports()).map(|p| hm.w(p)).collect();
        Ok(Self { hm: hm.clone(), chol, g, w })
    }

    pub fn matrices(&self) -> &HydroMatrices {
        &self.hm
    }

    pub fn ports(&self) -> usize {
        self.hm.ports()
    }

    /// `𝒥⁻¹ b`.
    pub fn solve(&self, b: &V6) -> V6 {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        for mut c in out.column_iter_mut() {
            let v = self.chol.solve(&V6::from_iterator(c.iter().copied()));
            c.copy_from(&v);
        }
        out
    }

    /// `Blk(r, l) = (S(r), 0; S(l), S(r))`.
    pub fn skew_block(l: &V3, r: &V3) -> M6 {
        block6(&skew(r), &M3::zeros(), &skew(l), &skew(r))
    }

    /// `F(l, r, w)`.
    pub fn body_force(&self, l: &V3, r: &V3, w: &DVector<f64>) -> V6 {
        let x = stack6(l, r);
        let y = self.hm.jscript * x - V6::from_iterator((&self.hm.c * w).iter().copied());
        let mut f = -(Self::skew_block(l, r) * y);
        for (p, wp) in w.iter().enumerate() {
            if *wp != 0.0 {
                let ww = &self.w[p] * w;
                f -= (self.g[p] * x + V6::from_iterator(ww.iter().copied())) * *wp;
            }
        }
        f
    }

    /// `(l, r)' = 𝒥⁻¹(C ẇ + F)`.
    pub fn velocity_rate(&self, l: &V3, r: &V3, w: &DVector<f64>, wdot: &DVector<f64>) -> V6 {
        let cw = &self.hm.c * wdot;
        self.solve(&(V6::from_iterator(cw.iter().copied()) + self.body_force(l, r, w)))
    }

    pub fn full_rhs(&self, s: &VehicleState, w: &DVector<f64>, wdot: &DVector<f64>) -> StateRate {
        let rot = rotation_matrix_unchecked(&s.q);
        let (ldot, rdot) = split6(&self.velocity_rate(&s.l, &s.r, w, wdot));
        StateRate { h: rot * s.l, q: attitude_rhs(&s.q, &s.r), l: ldot, r: rdot }
    }

    /// Right-hand side in chart coordinates `x = (h, q⃗, l, r)`.
    pub fn chart_rhs(&self, x: &V12, w: &DVector<f64>, wdot: &DVector<f64>) -> Result<V12> {
        let v = VectorChart(x.fixed_rows::<3>(3).into_owned());
        let l = x.fixed_rows::<3>(6).into_owned();
        let r = x.fixed_rows::<3>(9).into_owned();
        let (vdot, hdot) = chart_rhs(&v, &r, &l)?;
        let lr = self.velocity_rate(&l, &r, w, wdot);
        let mut out = V12::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&hdot);
        out.fixed_rows_mut::<3>(3).copy_from(&vdot);
        out.fixed_rows_mut::<6>(6).copy_from(&lr);
        Ok(out)
    }

    /// `(∂F/∂(l, r), ∂F/∂w)`.
    pub fn force_jacobians(&self, l: &V3, r: &V3, w: &DVector<f64>) -> (M6, DMatrix<f64>) {
        let m = self.ports();
        let x = stack6(l, r);
        let cw = &self.hm.c * w;
        let y = self.hm.jscript * x - V6::from_iterator(cw.iter().copied());
        let (y1, y2) = split6(&y);
        let blk = Self::skew_block(l, r);
        // −∂(Blk(r,l) y)/∂(l,r) with y held fixed
        let mut a = block6(&M3::zeros(), &skew(&y1), &skew(&y1), &skew(&y2));
        a -= blk * self.hm.jscript;
        for (p, wp) in w.iter().enumerate() {
            a -= self.g[p] * *wp;
        }
        let mut b = DMatrix::zeros(6, m);
        let blk_c = DMatrix::from_fn(6, 6, |i, j| blk[(i, j)]) * &self.hm.c;
        let mut wsum = DMatrix::zeros(6, m);
        for (p, wp) in w.iter().enumerate() {
            wsum += &self.w[p] * *wp;
        }
        for j in 0..m {
            let wj = &self.w[j] * w;
            let col = blk_c.column(j) - DVector::from_iterator(6, (self.g[j] * x).iter().copied()) - wj - wsum.column(j);
            b.set_column(j, &col);
        }
        (a, b)
    }

    /// Jacobian of [`Plant::chart_rhs`] with respect to the state and to `w`
    /// (the `ẇ` Jacobian is the constant `(0; 𝒥⁻¹C)`).
    pub fn chart_jacobians(&self, x: &V12, w: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let v = x.fixed_rows::<3>(3).into_owned();
        let l = x.fixed_rows::<3>(6).into_owned();
        let r = x.fixed_rows::<3>(9).into_owned();
        let q0 = VectorChart(v).q0()?;
        let q = Quaternion::from_parts(q0, v);
        let rot = rotation_matrix_unchecked(&q);
        let vl = v.cross(&l);
        let dh_dv = l * v.transpose() * -4.0 + (v * l.transpose() + M3::identity() * v.dot(&l)) * 2.0
            - vl * v.transpose() * (2.0 / q0)
            - skew(&l) * (2.0 * q0);
        let dv_dv = (r * v.transpose() * (-1.0 / q0) - skew(&r)) * 0.5;
        let dv_dr = (M3::identity() * q0 + skew(&v)) * 0.5;
        let (a, b) = self.force_jacobians(&l, &r, w);
        let ja = self.chol.solve(&a);
        let jb = self.solve_matrix(&b);
        let mut jx = DMatrix::zeros(12, 12);
        jx.view_mut((0, 3), (3, 3)).copy_from(&dh_dv);
        jx.view_mut((0, 6), (3, 3)).copy_from(&rot);
        jx.view_mut((3, 3), (3, 3)).copy_from(&dv_dv);
        jx.view_mut((3, 9), (3, 3)).copy_from(&dv_dr);
        jx.view_mut((6, 6), (6, 6)).copy_from(&ja);
        let mut jw = DMatrix::zeros(12, self.ports());
        jw.view_mut((6, 0), (6, self.ports())).copy_from(&jb);
        Ok((jx, jw))
    }

    /// `𝒥⁻¹ C`.
    pub fn jinv_c(&self) -> DMatrix<f64> {
        self.solve_matrix(&self.hm.c)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<VehicleState>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&VehicleState> {
        self.states.last()
    }
}

fn add(s: &VehicleState, k: &StateRate, h: f64) -> VehicleState {
    VehicleState { h: s.h + k.h * h, q: s.q + k.q.scale(h), l: s.l + k.l * h, r: s.r + k.r * h }
}

fn blown_up(s: &VehicleState) -> bool {
    s.to_array().iter().any(|v| !v.is_finite() || v.abs() > BLOWUP)
}

pub(crate) fn hermite(a: f64, fa: f64, b: f64, fb: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    a * (2.0 * s3 - 3.0 * s2 + 1.0) + fa * h * (s3 - 2.0 * s2 + s) + b * (-2.0 * s3 + 3.0 * s2) + fb * h * (s3 - s2)
}

fn rate_array(k: &StateRate) -> [f64; 13] {
    let q = k.q.to_array();
    [k.h.x, k.h.y, k.h.z, q[0], q[1], q[2], q[3], k.l.x, k.l.y, k.l.z, k.r.x, k.r.y, k.r.z]
}

/// Fixed-step RK4 on `[0, t_end]` with quaternion renormalization after every step.
/// States are reported at `sample_dt` spacing by cubic Hermite interpolation
/// (the final time is always included).
pub fn integrate(plant: &Plant, state0: &VehicleState, signal: &dyn ControlSignal, t_end: f64, dt: f64, sample_dt: f64) -> Result<Trajectory> {
    state0.check()?;
    if !(dt > 0.0) || !(t_end >= 0.0) || !(sample_dt > 0.0) {
        return Err(Error::Config(alloc::format!("bad integration step {dt}, horizon {t_end} or sampling {sample_dt}")));
    }
    if signal.channels() != plant.ports() {
        return Err(Error::Config(alloc::format!("signal has {} channels, plant has {} ports", signal.channels(), plant.ports())));
    }
    let steps = ((t_end / dt).round() as usize).max(if t_end > 0.0 { 1 } else { 0 });
    let h = if steps > 0 { t_end / steps as f64 } else { 0.0 };
    let n_samples = (t_end / sample_dt).floor() as usize;
    let mut sample_times: Vec<f64> = (0..=n_samples).map(|k| k as f64 * sample_dt).filter(|t| *t < t_end - 1e-12 * t_end.max(1.0)).collect();
    sample_times.push(t_end);
    let rhs = |t: f64, s: &VehicleState| plant.full_rhs(s, &signal.value(t), &signal.rate(t));
    let mut traj = Trajectory::default();
    let mut next = 0;
    let mut s = *state0;
    let mut t = 0.0;
    let mut k1 = rhs(t, &s);
    if sample_times[0] <= 0.0 {
        traj.times.push(0.0);
        traj.states.push(s);
        traj.controls.push(signal.value(0.0));
        next = 1;
    }
    for step in 0..steps {
        let t1 = (step + 1) as f64 * h;
        let k2 = rhs(t + h / 2.0, &add(&s, &k1, h / 2.0));
        let k3 = rhs(t + h / 2.0, &add(&s, &k2, h / 2.0));
        let k4 = rhs(t1, &add(&s, &k3, h));
        let mut s1 = VehicleState {
            h: s.h + (k1.h + k2.h * 2.0 + k3.h * 2.0 + k4.h) * (h / 6.0),
            q: s.q + (k1.q + k2.q.scale(2.0) + k3.q.scale(2.0) + k4.q).scale(h / 6.0),
            l: s.l + (k1.l + k2.l * 2.0 + k3.l * 2.0 + k4.l) * (h / 6.0),
            r: s.r + (k1.r + k2.r * 2.0 + k3.r * 2.0 + k4.r) * (h / 6.0),
        };
        s1.q = s1.q.normalize();
        if blown_up(&s1) {
            return Err(Error::Divergence { t: t1 });
        }
        let k1n = rhs(t1, &s1);
        while next < sample_times.len() && sample_times[next] <= t1 + 1e-12 * h {
            let ts = sample_times[next];
            let sigma = ((ts - t) / h).clamp(0.0, 1.0);
            let (a, fa, b, fb) = (s.to_array(), rate_array(&k1), s1.to_array(), rate_array(&k1n));
            let mut z = [0.0; 13];
            for i in 0..13 {
                z[i] = hermite(a[i], fa[i], b[i], fb[i], h, sigma);
            }
            let mut st = VehicleState::from_array(&z);
            st.q = st.q.normalize();
            traj.times.push(ts);
            traj.states.push(if sigma == 1.0 { s1 } else { st });
            traj.controls.push(signal.value(ts));
            next += 1;
        }
        s = s1;
        t = t1;
        k1 = k1n;
    }
    Ok(traj)
}

/// Fixed-step RK4 of the chart-form system; returns the terminal chart state.
pub fn integrate_chart(plant: &Plant, x0: &V12, signal: &dyn ControlSignal, t_end: f64, steps: usize) -> Result<V12> {
    let h = t_end / steps as f64;
    let f = |t: f64, x: &V12| plant.chart_rhs(x, &signal.value(t), &signal.rate(t));
    let mut x = *x0;
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = f(t, &x)?;
        let k2 = f(t + h / 2.0, &(x + k1 * (h / 2.0)))?;
        let k3 = f(t + h / 2.0, &(x + k2 * (h / 2.0)))?;
        let k4 = f(t + h, &(x + k3 * h))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if x.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP) {
            return Err(Error::Divergence { t: t + h });
        }
    }
    Ok(x)
}

/// Energy, squared linear impulse and `P·Π` for the free motion.
pub fn kirchhoff_invariants(hm: &HydroMatrices, l: &V3, r: &V3) -> (f64, f64, f64) {
    let (p, pi) = split6(&(hm.jscript * stack6(l, r)));
    (0.5 * (l.dot(&p) + r.dot(&pi)), p.norm_squared(), p.dot(&pi))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObstructionReport {
    /// `max |(y×n)·e₁|` over panel centroids.
    pub panel_residual: f64,
    /// `max_t |r₁(t) − r₁(0)|`.
    pub r1_drift: f64,
}

/// Axial angular velocity of a solid of revolution under axisymmetric ports.
pub fn revolution_obstruction(
    mesh: &PanelMesh,
    plant: &Plant,
    state0: &VehicleState,
    signal: &dyn ControlSignal,
    t_end: f64,
    dt: f64,
) -> Result<ObstructionReport> {
    let size = mesh.panels.iter().map(|p| p.centroid.norm()).fold(0.0, f64::max);
    let panel_residual = mesh.panels.iter().map(|p| p.centroid.cross(&p.normal).x.abs()).fold(0.0, f64::max);
    if panel_residual > 1e-10 * size {
        return Err(Error::Geometry(alloc::format!("mesh is not axisymmetric about e1: residual {panel_residual:e}")));
    }
    let traj = integrate(plant, state0, signal, t_end, dt, dt)?;
    let r1_drift = traj.states.iter().map(|s| (s.r.x - state0.r.x).abs()).fold(0.0, f64::max);
    Ok(ObstructionReport { panel_residual, r1_drift })
}
