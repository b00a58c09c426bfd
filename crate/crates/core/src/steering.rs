//! Local steering along the reference loop: least-norm linear steering on the
//! linearization, refined by damped Newton shooting on the nonlinear flow.

use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::{integrate, ControlSignal, Plant, Trajectory, VehicleState, BLOWUP};
use crate::error::{Error, Result};
use crate::hydro::HydroMatrices;
use crate::linalg::{V12, V3};
use crate::return_ctrl::{cond1_check, linearize, m_sequence, reference_loop, toy_coefficients, LinearizedSystem, RankReport, ReferenceLoop};

pub const BASIS_SIZE: usize = 12;
pub const STEER_TOL: f64 = 1e-6;
pub const MAX_NEWTON: usize = 20;
pub const MAX_DAMPING: u32 = 6;
/// Default locality radius for `‖start‖ + ‖target‖`.
pub const DEFAULT_ETA: f64 = 1e-2;
pub const DEFAULT_LAMBDA: f64 = 0.05;
pub const MAX_LAMBDA_HALVINGS: u32 = 10;
pub const DEFAULT_STEPS: usize = 1000;
/// Relative singular-value cutoff for the steering operators.
const SOLVE_TOL: f64 = 1e-9;

const LABELS: [&str; 12] = ["h1", "h2", "h3", "q1", "q2", "q3", "l1", "l2", "l3", "r1", "r2", "r3"];

/// Basis function `k` on `[0, T]` and its derivative; all vanish at `t = 0`.
pub fn basis(k: usize, t: f64, horizon: f64) -> (f64, f64) {
    let s = t / horizon;
    match k {
        0 => (s, 1.0 / horizon),
        1 => (s * s, 2.0 * s / horizon),
        _ => {
            let w = (k - 1) as f64 * core::f64::consts::PI / horizon;
            ((w * t).sin(), w * (w * t).cos())
        }
    }
}

/// `f(t) = Σ_k coeffs[(j, k)] b_k(t)` per channel `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlParameterization {
    pub horizon: f64,
    /// `m × N_b`.
    pub coeffs: DMatrix<f64>,
}

impl ControlParameterization {
    pub fn zeros(channels: usize, per_channel: usize, horizon: f64) -> Self {
        Self { horizon, coeffs: DMatrix::zeros(channels, per_channel) }
    }

    pub fn per_channel(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn channels(&self) -> usize {
        self.coeffs.nrows()
    }

    /// Coefficients flattened channel-major.
    pub fn to_vector(&self) -> DVector<f64> {
        let nb = self.per_channel();
        DVector::from_fn(self.coeffs.len(), |i, _| self.coeffs[(i / nb, i % nb)])
    }

    pub fn from_vector(v: &DVector<f64>, channels: usize, horizon: f64) -> Self {
        let nb = v.len() / channels;
        Self { horizon, coeffs: DMatrix::from_fn(channels, nb, |j, k| v[j * nb + k]) }
    }

    pub fn eval(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let mut f = DVector::zeros(self.channels());
        let mut fd = DVector::zeros(self.channels());
        for k in 0..self.per_channel() {
            let (b, bd) = basis(k, t, self.horizon);
            for j in 0..self.channels() {
                f[j] += self.coeffs[(j, k)] * b;
                fd[j] += self.coeffs[(j, k)] * bd;
            }
        }
        (f, fd)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteeringProblem {
    /// Chart states `(h, q⃗, l, r)`.
    pub start: V12,
    pub target: V12,
    pub horizon: f64,
    pub lambda: f64,
    pub eta: f64,
    pub steps: usize,
    pub basis_size: usize,
}

impl SteeringProblem {
    pub fn new(start: V12, target: V12, horizon: f64) -> Self {
        Self { start, target, horizon, lambda: DEFAULT_LAMBDA, eta: DEFAULT_ETA, steps: DEFAULT_STEPS, basis_size: BASIS_SIZE }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(alloc::format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.steps == 0 || self.basis_size == 0 {
            return Err(Error::Config("steps and basis size must be positive".into()));
        }
        for x in [&self.start, &self.target] {
            let qn = x.fixed_rows::<3>(3).norm();
            if !(qn < 1.0) {
                return Err(Error::ChartDomain { norm: qn });
            }
        }
        let size = self.start.norm() + self.target.norm();
        if !(size <= self.eta) {
            return Err(Error::Locality(alloc::format!(
                "|start| + |target| = {size:e} exceeds the locality radius {:e}; use closer endpoints",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Chart state to linear coordinates `(ĥ, p̂ = 2q̂, l̂, r̂)`.
pub fn to_linear(x: &V12) -> DVector<f64> {
    DVector::from_fn(12, |i, _| if (3..6).contains(&i) { 2.0 * x[i] } else { x[i] })
}

pub fn from_linear(z: &DVector<f64>) -> V12 {
    V12::from_fn(|i, _| if (3..6).contains(&i) { z[i] / 2.0 } else { z[i] })
}

/// Input-to-terminal-state map of the linearization: columns are the terminal
/// deviations produced by each basis input, plus the free response of `start`.
fn linear_map(ls: &LinearizedSystem, problem: &SteeringProblem) -> (DMatrix<f64>, DVector<f64>) {
    let m = ls.ports();
    let nb = problem.basis_size;
    let n = m * nb;
    let t_end = problem.horizon;
    let sc = ls.script_c();
    // shifted state x̃ = x − 𝒞f obeys x̃' = 𝒜x̃ + (ℬ + 𝒜𝒞)f
    let rhs = |t: f64, x: &DMatrix<f64>| -> DMatrix<f64> {
        let a = ls.script_a(t);
        let input = ls.script_b(t) + &a * &sc;
        let mut dx = &a * x;
        for k in 0..nb {
            let (b, _) = basis(k, t, t_end);
            for j in 0..m {
                let mut col = dx.column_mut(1 + j * nb + k);
                col += input.column(j) * b;
            }
        }
        dx
    };
    let mut x = DMatrix::zeros(12, 1 + n);
    x.set_column(0, &to_linear(&problem.start));
    let h = t_end / problem.steps as f64;
    for s in 0..problem.steps {
        let t = s as f64 * h;
        let k1 = rhs(t, &x);
        let k2 = rhs(t + h / 2.0, &(&x + &k1 * (h / 2.0)));
        let k3 = rhs(t + h / 2.0, &(&x + &k2 * (h / 2.0)));
        let k4 = rhs(t + h, &(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    for k in 0..nb {
        let (b, _) = basis(k, t_end, t_end);
        for j in 0..m {
            let mut col = x.column_mut(1 + j * nb + k);
            col += sc.column(j) * b;
        }
    }
    (x.columns(1, n).into_owned(), x.column(0).into_owned())
}

fn describe_directions(u: &DMatrix<f64>, cols: &[usize]) -> String {
    let mut parts = Vec::new();
    for &c in cols {
        let v = u.column(c);
        let terms: Vec<String> = (0..12).filter(|i| v[*i].abs() > 0.1).map(|i| alloc::format!("{}:{:.2}", LABELS[i], v[i])).collect();
        parts.push(alloc::format!("[{}]", terms.join(" ")));
    }
    parts.join(", ")
}

/// Least-norm solution of `G c = r` for a 12-row `G`; fails if `G` has rank < 12.
fn least_norm(g: &DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
    if g.ncols() < 12 {
        return Err(Error::RankDeficient(alloc::format!("steering operator has {} columns, needs 12", g.ncols())));
    }
    let svd = g.clone().svd(true, true);
    let s1 = svd.singular_values.iter().fold(0.0_f64, |a, x| a.max(*x));
    let weak: Vec<usize> = (0..12).filter(|k| !(svd.singular_values[*k] > SOLVE_TOL * s1)).collect();
    if !weak.is_empty() {
        return Err(Error::RankDeficient(alloc::format!(
            "steering operator has rank {} < 12; unreachable directions {}",
            12 - weak.len(),
            describe_directions(svd.u.as_ref().unwrap(), &weak)
        )));
    }
    svd.solve(r, SOLVE_TOL * s1).map_err(|e| Error::Singular(e.into()))
}

/// Least-norm `f` steering the linearization from `start` to `target`.
pub fn linear_steer(ls: &LinearizedSystem, problem: &SteeringProblem) -> Result<ControlParameterization> {
    if problem.steps == 0 || problem.basis_size == 0 || !(problem.horizon > 0.0) {
        return Err(Error::Config("steps, basis size and horizon must be positive".into()));
    }
    if (problem.horizon - ls.reference.horizon).abs() > 1e-12 * problem.horizon {
        return Err(Error::Config("problem horizon differs from the reference loop horizon".into()));
    }
    let (g, free) = linear_map(ls, problem);
    let rhs = to_linear(&problem.target) - free;
    let c = least_norm(&g, &rhs)?;
    Ok(ControlParameterization::from_vector(&c, ls.ports(), problem.horizon))
}

/// Terminal deviation of the linearization for given coefficients.
pub fn linear_response(ls: &LinearizedSystem, problem: &SteeringProblem, f: &ControlParameterization) -> V12 {
    let (g, free) = linear_map(ls, &SteeringProblem { basis_size: f.per_channel(), ..problem.clone() });
    from_linear(&(g * f.to_vector() + free))
}

/// `w = w̄₁e₁ + f`.
#[derive(Clone, Debug)]
pub struct SteeringControl {
    pub reference: ReferenceLoop,
    pub f: ControlParameterization,
}

impl ControlSignal for SteeringControl {
    fn channels(&self) -> usize {
        self.f.channels()
    }
    fn value(&self, t: f64) -> DVector<f64> {
        let mut w = self.f.eval(t).0;
        w[0] += self.reference.w(t);
        w
    }
    fn rate(&self, t: f64) -> DVector<f64> {
        let mut w = self.f.eval(t).1;
        w[0] += self.reference.w_dot(t);
        w
    }
}

/// Nonlinear terminal chart state, and optionally its Jacobian with respect to the coefficients.
pub fn shoot(plant: &Plant, control: &SteeringControl, start: &V12, steps: usize, jacobian: bool) -> Result<(V12, Option<DMatrix<f64>>)> {
    let m = plant.ports();
    let nb = control.f.per_channel();
    let n = if jacobian { m * nb } else { 0 };
    let t_end = control.f.horizon;
    let chat = plant.jinv_c();
    let rhs = |t: f64, x: &V12, s: &DMatrix<f64>| -> Result<(V12, DMatrix<f64>)> {
        let w = control.value(t);
        let dx = plant.chart_rhs(x, &w, &control.rate(t))?;
        if n == 0 {
            return Ok((dx, DMatrix::zeros(12, 0)));
        }
        let (jx, jw) = plant.chart_jacobians(x, &w)?;
        let mut ds = jx * s;
        for k in 0..nb {
            let (b, bd) = basis(k, t, t_end);
            for j in 0..m {
                let mut col = ds.column_mut(j * nb + k);
                col += jw.column(j) * b;
                let mut low = col.rows_mut(6, 6);
                low += chat.column(j) * bd;
            }
        }
        Ok((dx, ds))
    };
    let h = t_end / steps as f64;
    let mut x = *start;
    let mut s = DMatrix::zeros(12, n);
    for k in 0..steps {
        let t = k as f64 * h;
        let (a1, b1) = rhs(t, &x, &s)?;
        let (a2, b2) = rhs(t + h / 2.0, &(x + a1 * (h / 2.0)), &(&s + &b1 * (h / 2.0)))?;
        let (a3, b3) = rhs(t + h / 2.0, &(x + a2 * (h / 2.0)), &(&s + &b2 * (h / 2.0)))?;
        let (a4, b4) = rhs(t + h, &(x + a3 * h), &(&s + &b3 * h))?;
        x += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
        if n > 0 {
            s += (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (h / 6.0);
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP) {
            return Err(Error::Divergence { t: t + h });
        }
    }
    Ok((x, if jacobian { Some(s) } else { None }))
}

#[derive(Clone, Debug)]
pub struct SteeringResult {
    pub control: SteeringControl,
    pub trajectory: Trajectory,
    /// `(iteration, ‖x(T) − target‖)`; iteration 0 is the linear-steering guess.
    pub log: Vec<(usize, f64)>,
    pub newton_steps: usize,
    pub terminal_error: f64,
    /// Loop amplitude actually used.
    pub lambda: f64,
    pub cond1: RankReport,
    /// `(max |w|, max |ẇ|)` over the trajectory samples.
    pub control_bound: (f64, f64),
}

/// Reference loop and linearization for which `(cond1)` holds, halving `λ` as needed.
pub fn prepare(hm: &HydroMatrices, horizon: f64, lambda: f64) -> Result<(LinearizedSystem, RankReport)> {
    let tc = toy_coefficients(hm)?;
    let mut lam = lambda;
    let mut last = None;
    for _ in 0..=MAX_LAMBDA_HALVINGS {
        let lp = reference_loop(&tc, horizon, lam)?;
        let ls = linearize(hm, &lp)?;
        let rep = cond1_check(&ls, &m_sequence(&ls, lp.taylor_order())?)?;
        if rep.verdict {
            return Ok((ls, rep));
        }
        lam = lp.lambda / 2.0;
        last = Some(rep);
    }
    let rep = last.unwrap();
    Err(Error::RankDeficient(alloc::format!("{} fails (rank {}) for every tried loop amplitude", rep.condition, rep.rank)))
}

/// Steer from `problem.start` to `problem.target` in time `T`.
pub fn steer(hm: &HydroMatrices, problem: &SteeringProblem, sample_dt: f64) -> Result<SteeringResult> {
    problem.validate()?;
    let plant = Plant::new(hm)?;
    let (ls, cond1) = prepare(hm, problem.horizon, problem.lambda)?;
    let f0 = linear_steer(&ls, problem)?;
    let m = plant.ports();
    let make = |c: &DVector<f64>| SteeringControl { reference: ls.reference.clone(), f: ControlParameterization::from_vector(c, m, problem.horizon) };
    let mut c = f0.to_vector();
    let mut log = Vec::new();
    let mut newton_steps = 0;
    let (mut x, mut jac) = shoot(&plant, &make(&c), &problem.start, problem.steps, true)?;
    let mut res = (x - problem.target).norm();
    log.push((0, res));
    while res > STEER_TOL {
        if newton_steps == MAX_NEWTON {
            return Err(Error::Locality(alloc::format!(
                "no convergence in {MAX_NEWTON} Newton steps (residual {res:e}); try closer endpoints or a longer horizon"
            )));
        }
        let r = DVector::from_iterator(12, (x - problem.target).iter().copied());
        let delta = least_norm(jac.as_ref().unwrap(), &r)?;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_DAMPING {
            let trial = &c - &delta * step;
            if let Ok((xt, _)) = shoot(&plant, &make(&trial), &problem.start, problem.steps, false) {
                if (xt - problem.target).norm() < res {
                    accepted = Some(trial);
                    break;
                }
            }
            step /= 2.0;
        }
        let Some(next) = accepted else {
            return Err(Error::Locality(alloc::format!(
                "damped Newton step failed to reduce the residual {res:e}; try closer endpoints or a longer horizon"
            )));
        };
        c = next;
        newton_steps += 1;
        (x, jac) = shoot(&plant, &make(&c), &problem.start, problem.steps, true)?;
        res = (x - problem.target).norm();
        log.push((newton_steps, res));
    }
    let control = make(&c);
    let state0 = VehicleState::from_chart(&problem.start)?;
    let trajectory = integrate(&plant, &state0, &control, problem.horizon, problem.horizon / problem.steps as f64, sample_dt)?;
    let mut bound = (0.0_f64, 0.0_f64);
    for t in &trajectory.times {
        bound.0 = bound.0.max(control.value(*t).amax());
        bound.1 = bound.1.max(control.rate(*t).amax());
    }
    Ok(SteeringResult { control, trajectory, log, newton_steps, terminal_error: res, lambda: ls.reference.lambda, cond1, control_bound: bound })
}

/// Second-order locality of one linear steering step: for each scale `s`, the
/// nonlinear terminal error `‖x(T; w̄+f_s) − x(T; w̄) − s·δ‖` with `f_s` from
/// [`linear_steer`] toward `s·δ` from rest.
pub fn locality_errors(hm: &HydroMatrices, ls: &LinearizedSystem, delta: &V12, scales: &[f64], steps: usize) -> Result<Vec<(f64, f64)>> {
    let plant = Plant::new(hm)?;
    let t_end = ls.reference.horizon;
    let zero = ControlParameterization::zeros(plant.ports(), BASIS_SIZE, t_end);
    let base = shoot(&plant, &SteeringControl { reference: ls.reference.clone(), f: zero }, &V12::zeros(), steps, false)?.0;
    scales
        .iter()
        .map(|&s| {
            let problem = SteeringProblem { steps, eta: f64::INFINITY, ..SteeringProblem::new(V12::zeros(), delta * s, t_end) };
            let f = linear_steer(ls, &problem)?;
            let x = shoot(&plant, &SteeringControl { reference: ls.reference.clone(), f }, &V12::zeros(), steps, false)?.0;
            Ok((s, (x - base - delta * s).norm()))
        })
        .collect()
}

/// Chart state with only the position set.
pub fn displacement(h: V3) -> V12 {
    let mut x = V12::zeros();
    x.fixed_rows_mut::<3>(0).copy_from(&h);
    x
}
