//! Return-method apparatus: toy coefficients, the reference loop, the
//! linearization along it, the `M_i` recursion at the final time and the rank
//! conditions built from them.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::{hermite, Plant, BLOWUP};
use crate::error::{Error, Result};
use crate::hydro::HydroMatrices;
use crate::linalg::{block6, hcat, skew, to_dmatrix, vstack, M3, M6, V3};

/// Default relative singular-value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-9;
/// Smallest admissible `|α|`.
pub const ALPHA_MIN: f64 = 1e-12;
/// Relative threshold for the special case `γ + αβ = 0`.
pub const SPECIAL_TOL: f64 = 1e-12;
/// RK4 steps for the `w̄₁` equation on `[0, T]`.
pub const LOOP_STEPS: usize = 1 << 16;
pub const MAX_HALVINGS: u32 = 20;
/// Order of the endpoint Taylor expansions.
pub const TAYLOR_ORDER: usize = 8;
/// Columns below this fraction of the largest column norm are treated as zero.
const ZERO_COLUMN: f64 = 1e-13;
/// Relative tolerance for the symmetric-configuration check.
const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `γ + αβ = 0` within [`SPECIAL_TOL`].
    pub special: bool,
}

fn family_norm(ms: &[M3]) -> f64 {
    ms.iter().fold(0.0_f64, |a, m| a.max(m.abs().max()))
}

/// Largest off-axis component of `𝒥⁻¹F` and `𝒥⁻¹C e₁` along the one-axis motion,
/// relative to the on-axis size.
fn one_axis_residual(plant: &Plant) -> f64 {
    let m = plant.ports();
    let e1 = V3::new(1.0, 0.0, 0.0);
    let mut w1 = DVector::zeros(m);
    w1[0] = 1.0;
    let mut worst = 0.0_f64;
    let mut scale = 0.0_f64;
    let mut cw = crate::linalg::V6::zeros();
    cw.copy_from(&plant.matrices().c.column(0));
    let mut vs = vec![plant.solve(&cw)];
    for (l, w) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
        vs.push(plant.solve(&plant.body_force(&(e1 * l), &V3::zeros(), &(&w1 * w))));
    }
    for v in &vs {
        scale = scale.max(v[0].abs());
        for k in 1..6 {
            worst = worst.max(v[k].abs());
        }
    }
    if scale == 0.0 {
        if worst == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        worst / scale
    }
}

/// `α = −(C^M)₁₁/(m0+M₁₁)`, `β = −(L^M₁)₁₁/(m0+M₁₁)`, `γ = −(W^M₁)₁₁/(m0+M₁₁)`.
///
/// Fails if the configuration does not keep the motion `l = l₁e₁, r = 0,
/// w = w₁e₁` on that axis, or if `α` vanishes.
pub fn toy_coefficients(hm: &HydroMatrices) -> Result<ToyCoefficients> {
    if hm.ports() == 0 {
        return Err(Error::Config("no control ports".into()));
    }
    let d = hm.m0 + hm.m[(0, 0)];
    let alpha = -hm.cm[(0, 0)] / d;
    let beta = -hm.lm[0][(0, 0)] / d;
    let gamma = -hm.wm[0][(0, 0)] / d;
    if !(alpha.abs() > ALPHA_MIN) || !alpha.is_finite() {
        return Err(Error::AlphaVanishes { alpha });
    }
    let plant = Plant::new(hm)?;
    let res = one_axis_residual(&plant);
    if !(res <= SYMMETRY_TOL) {
        return Err(Error::Config(alloc::format!(
            "configuration is not symmetric: motion along e1 leaks off-axis (relative {res:e})"
        )));
    }
    let w_scale = hm.wm.iter().fold(0.0_f64, |a, x| a.max(x.iter().fold(0.0_f64, |b, y| b.max(y.abs()))));
    let scale = (w_scale + alpha.abs() * family_norm(&hm.lm)) / d;
    let special = (gamma + alpha * beta).abs() <= SPECIAL_TOL * scale.max(f64::MIN_POSITIVE);
    Ok(ToyCoefficients { alpha, beta, gamma, special })
}

/// Cutoff `ξ` (0 before `T/3`, 1 after `2T/3`, degree-9 smoothstep between)
/// and its first two derivatives.
pub fn cutoff(t: f64, horizon: f64) -> [f64; 3] {
    let a = horizon / 3.0;
    if t <= a {
        return [0.0, 0.0, 0.0];
    }
    if t >= 2.0 * a {
        return [1.0, 0.0, 0.0];
    }
    let s = (t - a) / a;
    let u = 1.0 - s;
    let p = s.powi(5) * (126.0 + s * (-420.0 + s * (540.0 + s * (-315.0 + s * 70.0))));
    let dp = 630.0 * s.powi(4) * u.powi(4);
    let ddp = 2520.0 * s.powi(3) * u.powi(3) * (1.0 - 2.0 * s);
    [p, dp / a, ddp / (a * a)]
}

/// Reference loop `h̄ = h̄₁e₁`, `l̄ = l̄₁e₁`, `w̄ = w̄₁e₁`, `q̄ = 1`, `r̄ = 0`.
#[derive(Clone, Debug)]
pub struct ReferenceLoop {
    pub horizon: f64,
    /// Amplitude actually used (after any halvings).
    pub lambda: f64,
    pub halvings: u32,
    pub toy: ToyCoefficients,
    step: f64,
    w: Vec<f64>,
    wdot: Vec<f64>,
    /// Taylor coefficients of `l̄₁` at `T`.
    pub l_taylor: Vec<f64>,
    /// Taylor coefficients of `w̄₁` at `T`.
    pub w_taylor: Vec<f64>,
}

impl ReferenceLoop {
    pub fn h(&self, t: f64) -> f64 {
        let [x, _, _] = cutoff(t, self.horizon);
        self.lambda * x * (t - self.horizon).powi(2)
    }

    pub fn l(&self, t: f64) -> f64 {
        let [x, dx, _] = cutoff(t, self.horizon);
        let s = t - self.horizon;
        self.lambda * (dx * s * s + 2.0 * x * s)
    }

    pub fn l_dot(&self, t: f64) -> f64 {
        let [x, dx, ddx] = cutoff(t, self.horizon);
        let s = t - self.horizon;
        self.lambda * (ddx * s * s + 4.0 * dx * s + 2.0 * x)
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.w.len() - 1;
        let x = (t / self.step).clamp(0.0, n as f64);
        let i = (x.floor() as usize).min(n - 1);
        (i, x - i as f64)
    }

    pub fn w(&self, t: f64) -> f64 {
        let (i, s) = self.locate(t);
        hermite(self.w[i], self.wdot[i], self.w[i + 1], self.wdot[i + 1], self.step, s)
    }

    pub fn w_dot(&self, t: f64) -> f64 {
        let (i, s) = self.locate(t);
        let (a, fa, b, fb, h) = (self.w[i], self.wdot[i], self.w[i + 1], self.wdot[i + 1], self.step);
        (a * (6.0 * s * s - 6.0 * s) + fa * h * (3.0 * s * s - 4.0 * s + 1.0) + b * (6.0 * s - 6.0 * s * s) + fb * h * (3.0 * s * s - 2.0 * s)) / h
    }

    pub fn taylor_order(&self) -> usize {
        self.w_taylor.len() - 1
    }

    /// `w̄₁^{(k)}(T)`.
    pub fn w_derivative(&self, k: usize) -> f64 {
        self.w_taylor[k] * (1..=k).fold(1.0, |a, j| a * j as f64)
    }

    /// `l̄₁^{(k)}(T)`.
    pub fn l_derivative(&self, k: usize) -> f64 {
        self.l_taylor[k] * (1..=k).fold(1.0, |a, j| a * j as f64)
    }

    /// Sampled node values `(t_k, w̄₁(t_k))`.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.w.iter().enumerate().map(move |(k, w)| (k as f64 * self.step, *w))
    }
}

fn w_rhs(tc: &ToyCoefficients, l: f64, ldot: f64, w: f64) -> f64 {
    (ldot - tc.beta * l * w - tc.gamma * w * w) / tc.alpha
}

/// Build the reference loop, halving `λ` until the `w̄₁` equation stays bounded.
pub fn reference_loop(tc: &ToyCoefficients, horizon: f64, lambda: f64) -> Result<ReferenceLoop> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Config(alloc::format!("horizon must be positive, got {horizon}")));
    }
    if !(lambda != 0.0) || !lambda.is_finite() {
        return Err(Error::Config(alloc::format!("loop amplitude must be nonzero, got {lambda}")));
    }
    if !(tc.alpha.abs() > 0.0) {
        return Err(Error::AlphaVanishes { alpha: tc.alpha });
    }
    let mut lam = lambda;
    for halvings in 0..=MAX_HALVINGS {
        let mut lp = ReferenceLoop {
            horizon,
            lambda: lam,
            halvings,
            toy: *tc,
            step: horizon / LOOP_STEPS as f64,
            w: Vec::new(),
            wdot: Vec::new(),
            l_taylor: Vec::new(),
            w_taylor: Vec::new(),
        };
        if integrate_loop(&mut lp) {
            endpoint_taylor(&mut lp);
            return Ok(lp);
        }
        lam /= 2.0;
    }
    Err(Error::Amplitude(alloc::format!(
        "w1 equation blows up on [0, {horizon}] even after {MAX_HALVINGS} halvings of lambda = {lambda}"
    )))
}

fn integrate_loop(lp: &mut ReferenceLoop) -> bool {
    let h = lp.step;
    let tc = lp.toy;
    let f = |t: f64, w: f64| w_rhs(&tc, lp.l(t), lp.l_dot(t), w);
    let mut w = 0.0;
    let mut ws = Vec::with_capacity(LOOP_STEPS + 1);
    let mut ds = Vec::with_capacity(LOOP_STEPS + 1);
    let mut k1 = f(0.0, w);
    ws.push(w);
    ds.push(k1);
    for k in 0..LOOP_STEPS {
        let t = k as f64 * h;
        let k2 = f(t + h / 2.0, w + k1 * h / 2.0);
        let k3 = f(t + h / 2.0, w + k2 * h / 2.0);
        let k4 = f(t + h, w + k3 * h);
        w += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * h / 6.0;
        if !w.is_finite() || w.abs() > BLOWUP {
            return false;
        }
        k1 = f(t + h, w);
        ws.push(w);
        ds.push(k1);
    }
    lp.w = ws;
    lp.wdot = ds;
    true
}

/// Taylor coefficients at `T` from `α w' = l' − β l w − γ w²`, with `l̄₁ = 2λ(t − T)` near `T`.
fn endpoint_taylor(lp: &mut ReferenceLoop) {
    let n = TAYLOR_ORDER;
    let mut a = vec![0.0; n + 1];
    a[1] = 2.0 * lp.lambda;
    let mut b = vec![0.0; n + 1];
    b[0] = *lp.w.last().unwrap();
    let tc = lp.toy;
    for k in 0..n {
        let lw: f64 = (0..=k).map(|i| a[i] * b[k - i]).sum();
        let ww: f64 = (0..=k).map(|i| b[i] * b[k - i]).sum();
        b[k + 1] = ((k + 1) as f64 * a[k + 1] - tc.beta * lw - tc.gamma * ww) / (tc.alpha * (k + 1) as f64);
    }
    lp.l_taylor = a;
    lp.w_taylor = b;
}

/// Linearization along the reference loop.
///
/// The state is partitioned as `(ẑ, k̂)` with `ẑ = (ĥ, p̂)`, `p̂ = 2q̂` and
/// `k̂ = (l̂, r̂)`: `ẑ' = D ẑ + k̂`, `𝒥k̂' = A k̂ + B f + C ḟ`.
#[derive(Clone, Debug)]
pub struct LinearizedSystem {
    pub jscript: M6,
    pub jinv: M6,
    /// `C`, 6×m.
    pub c: DMatrix<f64>,
    /// `∂A/∂l̄₁`, `∂A/∂w̄₁`, `∂B/∂l̄₁`, `∂B/∂w̄₁`.
    pub a_l: M6,
    pub a_w: M6,
    pub b_l: DMatrix<f64>,
    pub b_w: DMatrix<f64>,
    /// `∂D/∂l̄₁ = (0, −S(e₁); 0, 0)`.
    pub d_l: M6,
    pub bold_a: M6,
    pub bold_b: DMatrix<f64>,
    pub bold_d: M6,
    pub bold_e: DMatrix<f64>,
    pub reference: ReferenceLoop,
}

/// `(A_l, A_w, B_l, B_w)`: `A = l̄₁A_l + w̄₁A_w`, `B = l̄₁B_l + w̄₁B_w` at `(l̄₁e₁, 0, w̄₁e₁)`.
pub fn coefficient_matrices(plant: &Plant) -> (M6, M6, DMatrix<f64>, DMatrix<f64>) {
    let m = plant.ports();
    let e1 = V3::new(1.0, 0.0, 0.0);
    let (a_l, b_l) = plant.force_jacobians(&e1, &V3::zeros(), &DVector::zeros(m));
    let mut w1 = DVector::zeros(m);
    w1[0] = 1.0;
    let (a_w, b_w) = plant.force_jacobians(&V3::zeros(), &V3::zeros(), &w1);
    (a_l, a_w, b_l, b_w)
}

pub fn d_unit() -> M6 {
    block6(&M3::zeros(), &(-skew(&V3::new(1.0, 0.0, 0.0))), &M3::zeros(), &M3::zeros())
}

pub fn linearize(hm: &HydroMatrices, reference: &ReferenceLoop) -> Result<LinearizedSystem> {
    let plant = Plant::new(hm)?;
    let (a_l, a_w, b_l, b_w) = coefficient_matrices(&plant);
    let alpha = reference.toy.alpha;
    let jinv = hm.jscript.try_inverse().ok_or_else(|| Error::Singular("𝒥".into()))?;
    let d_l = d_unit();
    let bold_a = a_l * alpha + a_w;
    let bold_b = &b_l * alpha + &b_w;
    let bold_d = d_l * alpha;
    let jinv_c = to_dmatrix(&jinv) * &hm.c;
    let bold_e = &bold_b + to_dmatrix(&bold_a) * &jinv_c;
    Ok(LinearizedSystem {
        jscript: hm.jscript,
        jinv,
        c: hm.c.clone(),
        a_l,
        a_w,
        b_l,
        b_w,
        d_l,
        bold_a,
        bold_b,
        bold_d,
        bold_e,
        reference: reference.clone(),
    })
}

fn place(top_left: &DMatrix<f64>, top_right: &DMatrix<f64>, bottom_right: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(12, 12);
    out.view_mut((0, 0), (6, 6)).copy_from(top_left);
    out.view_mut((0, 6), (6, 6)).copy_from(top_right);
    out.view_mut((6, 6), (6, 6)).copy_from(bottom_right);
    out
}

impl LinearizedSystem {
    pub fn ports(&self) -> usize {
        self.c.ncols()
    }

    pub fn a(&self, t: f64) -> M6 {
        self.a_l * self.reference.l(t) + self.a_w * self.reference.w(t)
    }

    pub fn b(&self, t: f64) -> DMatrix<f64> {
        &self.b_l * self.reference.l(t) + &self.b_w * self.reference.w(t)
    }

    pub fn d(&self, t: f64) -> M6 {
        self.d_l * self.reference.l(t)
    }

    /// `𝒥⁻¹C`.
    pub fn c_hat(&self) -> DMatrix<f64> {
        to_dmatrix(&self.jinv) * &self.c
    }

    /// `𝒜 = (D, I; 0, 𝒥⁻¹A)` from given values of `l̄₁`, `w̄₁`.
    fn script_a_at(&self, l: f64, w: f64, identity: bool) -> DMatrix<f64> {
        let eye = if identity { DMatrix::identity(6, 6) } else { DMatrix::zeros(6, 6) };
        let ahat = self.jinv * (self.a_l * l + self.a_w * w);
        place(&to_dmatrix(&(self.d_l * l)), &eye, &to_dmatrix(&ahat))
    }

    fn script_b_at(&self, l: f64, w: f64) -> DMatrix<f64> {
        let bhat = to_dmatrix(&self.jinv) * (&self.b_l * l + &self.b_w * w);
        vstack(&DMatrix::zeros(6, self.ports()), &bhat)
    }

    pub fn script_a(&self, t: f64) -> DMatrix<f64> {
        self.script_a_at(self.reference.l(t), self.reference.w(t), true)
    }

    pub fn script_b(&self, t: f64) -> DMatrix<f64> {
        self.script_b_at(self.reference.l(t), self.reference.w(t))
    }

    /// `𝒞 = (0; 𝒥⁻¹C)`.
    pub fn script_c(&self) -> DMatrix<f64> {
        vstack(&DMatrix::zeros(6, self.ports()), &self.c_hat())
    }

    /// Taylor coefficient `k` of `𝒜(T + s)`.
    pub fn script_a_taylor(&self, k: usize) -> DMatrix<f64> {
        self.script_a_at(self.reference.l_taylor[k], self.reference.w_taylor[k], k == 0)
    }

    pub fn script_b_taylor(&self, k: usize) -> DMatrix<f64> {
        self.script_b_at(self.reference.l_taylor[k], self.reference.w_taylor[k])
    }

    fn jdj(&self) -> DMatrix<f64> {
        to_dmatrix(&(self.jscript * self.bold_d * self.jinv))
    }

    fn ajinv(&self) -> DMatrix<f64> {
        to_dmatrix(&(self.bold_a * self.jinv))
    }
}

/// `M₀ = ℬ + 𝒜𝒞`, `M_i = M'_{i−1} − 𝒜M_{i−1}` on Taylor series; returns `M_i(T)`
/// (the constant coefficients) for `i = 0..=i_max`.
pub fn m_recursion(a: &[DMatrix<f64>], b: &[DMatrix<f64>], c: &DMatrix<f64>, i_max: usize) -> Result<Vec<DMatrix<f64>>> {
    let have = a.len().min(b.len());
    if have < i_max + 1 {
        return Err(Error::TaylorOrder { needed: i_max, available: have.saturating_sub(1) });
    }
    let mut series: Vec<DMatrix<f64>> = (0..=i_max).map(|k| &b[k] + &a[k] * c).collect();
    let mut out = vec![series[0].clone()];
    for i in 1..=i_max {
        series = (0..=i_max - i)
            .map(|k| {
                let mut s = &series[k + 1] * (k + 1) as f64;
                for j in 0..=k {
                    s -= &a[j] * &series[k - j];
                }
                s
            })
            .collect();
        out.push(series[0].clone());
    }
    Ok(out)
}

/// `M_i(T) = (U_i(T); V_i(T))`.
#[derive(Clone, Debug)]
pub struct MSequence {
    pub blocks: Vec<DMatrix<f64>>,
}

impl MSequence {
    pub fn u(&self, i: usize) -> DMatrix<f64> {
        self.blocks[i].rows(0, 6).into_owned()
    }

    pub fn v(&self, i: usize) -> DMatrix<f64> {
        self.blocks[i].rows(6, 6).into_owned()
    }

    /// Largest of the blocks that vanish by parity (`V_{2k}`, `U_{2k+1}`),
    /// relative to the largest block.
    pub fn parity_residual(&self) -> f64 {
        let mut scale = 0.0_f64;
        let mut worst = 0.0_f64;
        for i in 0..self.blocks.len() {
            let (u, v) = (self.u(i).norm(), self.v(i).norm());
            scale = scale.max(u).max(v);
            worst = worst.max(if i % 2 == 0 { v } else { u });
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

pub fn m_sequence(ls: &LinearizedSystem, i_max: usize) -> Result<MSequence> {
    let available = ls.reference.taylor_order();
    if i_max > available {
        return Err(Error::TaylorOrder { needed: i_max, available });
    }
    let a: Vec<_> = (0..=i_max).map(|k| ls.script_a_taylor(k)).collect();
    let b: Vec<_> = (0..=i_max).map(|k| ls.script_b_taylor(k)).collect();
    Ok(MSequence { blocks: m_recursion(&a, &b, &ls.script_c(), i_max)? })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedFormCheck {
    pub name: String,
    /// True for the nominal closed forms, false for the recomputed ones.
    pub nominal: bool,
    pub relative_error: f64,
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let s = b.norm().max(a.norm());
    if s == 0.0 {
        0.0
    } else {
        (a - b).norm() / s
    }
}

/// Compare `V₁, V₃, V₅, V₇, U₂, U₄, U₆, U₈` from the recursion with their
/// closed forms in `Â'(T)`, `D'(T)`, `V₀'(T)`. Needs `γ + αβ = 0` and `i_max ≥ 8`.
pub fn closed_form_checks(ls: &LinearizedSystem, seq: &MSequence) -> Result<Vec<ClosedFormCheck>> {
    if !ls.reference.toy.special {
        return Err(Error::Config("closed forms hold only when gamma + alpha*beta = 0".into()));
    }
    if seq.blocks.len() < 9 {
        return Err(Error::TaylorOrder { needed: 8, available: seq.blocks.len().saturating_sub(1) });
    }
    let (a1, b1) = (ls.reference.l_taylor[1], ls.reference.w_taylor[1]);
    let ap = to_dmatrix(&(ls.jinv * (ls.a_l * a1 + ls.a_w * b1)));
    let dp = to_dmatrix(&(ls.d_l * a1));
    let chat = ls.c_hat();
    let v0p = to_dmatrix(&ls.jinv) * (&ls.b_l * a1 + &ls.b_w * b1) + &ap * &chat;
    let ap2 = &ap * &ap;
    let ap3 = &ap2 * &ap;
    let forms: Vec<(&str, bool, DMatrix<f64>, DMatrix<f64>)> = vec![
        ("V1 = V0'", true, seq.v(1), v0p.clone()),
        ("V3 = -3A'V0'", true, seq.v(3), &ap * &v0p * -3.0),
        ("V5 = 15A'^2V0'", true, seq.v(5), &ap2 * &v0p * 15.0),
        ("V7 = -105A'^3V0'", true, seq.v(7), &ap3 * &v0p * -105.0),
        ("U2 = -D'U0 - 2V0'", true, seq.u(2), -(&dp * &chat) - &v0p * 2.0),
        ("U4 = 4(D'+2A')V0'", true, seq.u(4), (&dp + &ap * 2.0) * &v0p * 4.0),
        ("U6 = -3(8D'+11A')A'V0'", true, seq.u(6), (&dp * 8.0 + &ap * 11.0) * &ap * &v0p * -3.0),
        ("U8 = 6(17D'+64A')A'^2V0'", true, seq.u(8), (&dp * 17.0 + &ap * 64.0) * &ap2 * &v0p * 6.0),
        ("U6 = -24(D'+2A')A'V0'", false, seq.u(6), (&dp + &ap * 2.0) * &ap * &v0p * -24.0),
        ("U8 = 192(D'+2A')A'^2V0'", false, seq.u(8), (&dp + &ap * 2.0) * &ap2 * &v0p * 192.0),
    ];
    Ok(forms
        .into_iter()
        .map(|(name, nominal, got, want)| ClosedFormCheck { name: name.into(), nominal, relative_error: rel_err(&got, &want) })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub condition: String,
    /// Rows and columns of the assembled test matrix.
    pub dims: (usize, usize),
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub target: usize,
    pub tolerance: f64,
    pub verdict: bool,
    /// Some singular value lies within a factor 10 of the threshold.
    pub marginal: bool,
}

/// Drop zero columns and scale the rest to unit norm.
fn equilibrate(m: &DMatrix<f64>) -> DMatrix<f64> {
    let norms: Vec<f64> = m.column_iter().map(|c| c.norm()).collect();
    let big = norms.iter().fold(0.0_f64, |a, x| a.max(*x));
    let keep: Vec<usize> = (0..m.ncols()).filter(|j| norms[*j] > ZERO_COLUMN * big && norms[*j] > 0.0).collect();
    DMatrix::from_fn(m.nrows(), keep.len(), |i, j| m[(i, keep[j])] / norms[keep[j]])
}

fn sorted_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    sv
}

/// Numerical rank after column equilibration: `#{σ_k > tol·σ₁}`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> (Vec<f64>, usize, bool) {
    let sv = sorted_singular_values(&equilibrate(m));
    let Some(&s1) = sv.first() else { return (sv, 0, false) };
    if s1 == 0.0 {
        return (sv, 0, false);
    }
    let thr = tol * s1;
    let rank = sv.iter().filter(|s| **s > thr).count();
    let marginal = sv.iter().any(|s| *s > thr / 10.0 && *s <= thr * 10.0);
    (sv, rank, marginal)
}

pub fn rank_check(name: &str, columns: &[DMatrix<f64>], target: usize) -> Result<RankReport> {
    rank_check_with(name, columns, target, RANK_TOL)
}

pub fn rank_check_with(name: &str, columns: &[DMatrix<f64>], target: usize, tol: f64) -> Result<RankReport> {
    if let Some(first) = columns.first() {
        if let Some(bad) = columns.iter().find(|c| c.nrows() != first.nrows()) {
            return Err(Error::Config(alloc::format!("{name}: blocks with {} and {} rows", first.nrows(), bad.nrows())));
        }
    }
    let m = hcat(columns);
    let (singular_values, rank, marginal) = numerical_rank(&m, tol);
    Ok(RankReport {
        condition: name.into(),
        dims: (m.nrows(), m.ncols()),
        singular_values,
        rank,
        target,
        tolerance: tol,
        verdict: rank == target,
        marginal,
    })
}

/// Linearization at rest: `rank(𝒞, M₀) = rank((0, 𝒥⁻¹C; 𝒥⁻¹C, 0))`, expected `2·rank C`.
#[derive(Clone, Debug, PartialEq)]
pub struct RestRankReport {
    pub rank_c: RankReport,
    pub kalman: RankReport,
    pub holds: bool,
}

pub fn rest_rank_check(c: &DMatrix<f64>, jscript: &M6) -> Result<RestRankReport> {
    let jinv = jscript.try_inverse().ok_or_else(|| Error::Singular("𝒥".into()))?;
    let chat = to_dmatrix(&jinv) * c;
    let z = DMatrix::zeros(6, c.ncols());
    let rank_c = rank_check("rank(C)=6", core::slice::from_ref(c), 6)?;
    let target = 2 * rank_c.rank;
    let kalman = rank_check("rank(Kalman pair at rest)=2rank(C)", &[vstack(&z, &chat), vstack(&chat, &z)], target)?;
    let holds = kalman.verdict;
    Ok(RestRankReport { rank_c, kalman, holds })
}

/// `rank(𝒞, M₀(T), …, M_n(T)) = 12`.
pub fn cond1_check(ls: &LinearizedSystem, seq: &MSequence) -> Result<RankReport> {
    let mut cols = vec![ls.script_c()];
    cols.extend(seq.blocks.iter().cloned());
    rank_check(&alloc::format!("cond1: rank(Cs, M0..M{}) = 12", seq.blocks.len() - 1), &cols, 12)
}

/// `rank(C, 𝐄) = 6` and `rank(C, ½𝒥𝐃𝒥⁻¹C + 𝐄) = 6`.
pub fn corollary1_check(ls: &LinearizedSystem) -> Result<(RankReport, RankReport)> {
    let e = &ls.bold_e;
    let x2 = ls.jdj() * &ls.c * 0.5 + e;
    Ok((
        rank_check("rank(C, B+AJ^-1C) = 6", &[ls.c.clone(), e.clone()], 6)?,
        rank_check("rank(C, JDJ^-1C/2 + B+AJ^-1C) = 6", &[ls.c.clone(), x2], 6)?,
    ))
}

/// Coefficient pairs of the last two `newcond2` columns.
pub const NOMINAL_PAIRS: [(f64, f64); 2] = [(8.0, 11.0), (17.0, 64.0)];
pub const RECOMPUTED_PAIRS: [(f64, f64); 2] = [(1.0, 2.0), (1.0, 2.0)];

/// Column sets of the two Corollary 2 conditions for the given coefficient pairs.
pub fn corollary2_columns(ls: &LinearizedSystem, pairs: [(f64, f64); 2]) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let e = &ls.bold_e;
    let aj = ls.ajinv();
    let jdj = ls.jdj();
    let e1 = &aj * e;
    let e2 = &aj * &e1;
    let e3 = &aj * &e2;
    let first = vec![ls.c.clone(), e.clone(), e1.clone(), e2.clone(), e3];
    let second = vec![
        ls.c.clone(),
        &jdj * &ls.c * 0.5 + e,
        (&jdj + &aj * 2.0) * e,
        (&jdj * pairs[0].0 + &aj * pairs[0].1) * &e1,
        (&jdj * pairs[1].0 + &aj * pairs[1].1) * &e2,
    ];
    (first, second)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corollary2Report {
    pub nominal: (RankReport, RankReport),
    pub recomputed: (RankReport, RankReport),
}

pub fn corollary2_check(ls: &LinearizedSystem) -> Result<Corollary2Report> {
    let run = |pairs, tag: &str| -> Result<(RankReport, RankReport)> {
        let (a, b) = corollary2_columns(ls, pairs);
        Ok((
            rank_check(&alloc::format!("newcond1{tag}: rank(C, E, AJ^-1E, (AJ^-1)^2E, (AJ^-1)^3E) = 6"), &a, 6)?,
            rank_check(&alloc::format!("newcond2{tag} = 6"), &b, 6)?,
        ))
    };
    Ok(Corollary2Report { nominal: run(NOMINAL_PAIRS, "")?, recomputed: run(RECOMPUTED_PAIRS, " (recomputed)")? })
}

/// Corollary 2 columns lifted to the 12-dimensional state: `(0; 𝒥⁻¹X)` for the
/// first condition and `(𝒥⁻¹Y; 0)` for the second.
pub fn corollary2_lifted(ls: &LinearizedSystem, pairs: [(f64, f64); 2]) -> DMatrix<f64> {
    let (a, b) = corollary2_columns(ls, pairs);
    let j = to_dmatrix(&ls.jinv);
    let mut cols = Vec::new();
    for x in a {
        let z = DMatrix::zeros(6, x.ncols());
        cols.push(vstack(&z, &(&j * x)));
    }
    for y in b {
        let z = DMatrix::zeros(6, y.ncols());
        cols.push(vstack(&(&j * y), &z));
    }
    hcat(&cols)
}

/// Orthogonal projector onto the numerical column span.
pub fn span_projector(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let eq = equilibrate(m);
    let n = m.nrows();
    if eq.ncols() == 0 {
        return DMatrix::zeros(n, n);
    }
    let svd = eq.svd(true, false);
    let u = svd.u.unwrap();
    let s1 = svd.singular_values.iter().fold(0.0_f64, |a, x| a.max(*x));
    let mut p = DMatrix::zeros(n, n);
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > tol * s1 {
            let c = u.column(k);
            p += &c * c.transpose();
        }
    }
    p
}

/// Spectral distance between the projectors onto two column spans.
pub fn span_distance(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> f64 {
    let d = span_projector(a, tol) - span_projector(b, tol);
    sorted_singular_values(&d).first().copied().unwrap_or(0.0)
}

/// Nonzero entries allowed in `B^∞` and `C` for the 4- and 3-port presets.
pub fn limit_patterns(m: usize) -> Option<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    match m {
        4 => Some((vec![(1, 3), (2, 2)], vec![(0, 0), (3, 1), (4, 2), (5, 3)])),
        3 => Some((vec![(1, 2), (2, 2)], vec![(0, 0), (3, 1), (4, 2), (5, 2)])),
        _ => None,
    }
}

fn pattern_residual(m: &DMatrix<f64>, allowed: &[(usize, usize)]) -> f64 {
    let scale = m.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !allowed.contains(&(i, j)) {
                worst = worst.max(m[(i, j)].abs());
            }
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

/// `B^∞ = lim_{λ→∞} 𝐁`, i.e. `𝐁` with `α = 0`.
pub fn b_infinity(hm: &HydroMatrices) -> Result<DMatrix<f64>> {
    Ok(coefficient_matrices(&Plant::new(hm)?).3)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub lambda: f64,
    /// `det R / Π‖columns‖`.
    pub det_r1: f64,
    pub det_r2: f64,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Grid values (or bracket midpoints) where a determinant changes sign or nearly vanishes.
    pub candidates: Vec<f64>,
    pub b_inf: DMatrix<f64>,
    /// Normalized determinant of `(C, last columns of B^∞)`.
    pub limit_det: f64,
    /// `(B^∞, C)` entries outside the limit patterns, relative; `None` without a known pattern.
    pub pattern_residual: Option<(f64, f64)>,
}

/// Near-zero threshold on normalized determinants.
pub const DET_NEAR_ZERO: f64 = 1e-8;

fn normalized_det(cols: &DMatrix<f64>) -> f64 {
    let norms: f64 = cols.column_iter().map(|c| c.norm()).product();
    if norms == 0.0 {
        0.0
    } else {
        cols.clone().determinant() / norms
    }
}

fn square_with_c(c: &DMatrix<f64>, extra: &DMatrix<f64>) -> DMatrix<f64> {
    let need = 6 - c.ncols();
    hcat(&[c.clone(), extra.columns(extra.ncols() - need, need).into_owned()])
}

/// Evaluate `det R₁(λ)`, `det R₂(λ)` over density scalings `λ` of `hm`.
pub fn lambda_sweep(hm: &HydroMatrices, grid: &[f64]) -> Result<SweepReport> {
    let m = hm.ports();
    if !(1..6).contains(&m) {
        return Err(Error::Config(alloc::format!("lambda sweep needs 1..5 ports, got {m}")));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &lam in grid {
        let h = hm.scale_density(lam)?;
        let plant = Plant::new(&h)?;
        let tc = toy_coefficients(&h)?;
        let (a_l, a_w, b_l, b_w) = coefficient_matrices(&plant);
        let jinv = h.jscript.try_inverse().ok_or_else(|| Error::Singular("𝒥".into()))?;
        let bold_a = a_l * tc.alpha + a_w;
        let jinv_c = to_dmatrix(&jinv) * &h.c;
        let e = &b_l * tc.alpha + &b_w + to_dmatrix(&bold_a) * &jinv_c;
        let x2 = to_dmatrix(&(h.jscript * d_unit() * tc.alpha)) * &jinv_c * 0.5 + &e;
        points.push(SweepPoint {
            lambda: lam,
            det_r1: normalized_det(&square_with_c(&h.c, &e)),
            det_r2: normalized_det(&square_with_c(&h.c, &x2)),
        });
    }
    let mut candidates = Vec::new();
    for (k, p) in points.iter().enumerate() {
        if p.det_r1.abs() < DET_NEAR_ZERO || p.det_r2.abs() < DET_NEAR_ZERO {
            candidates.push(p.lambda);
        }
        if k > 0 {
            let q = &points[k - 1];
            if q.det_r1 * p.det_r1 < 0.0 || q.det_r2 * p.det_r2 < 0.0 {
                candidates.push((q.lambda * p.lambda).sqrt());
            }
        }
    }
    let b_inf = b_infinity(hm)?;
    let limit_det = normalized_det(&square_with_c(&hm.c, &b_inf));
    let pattern_residual = limit_patterns(m).map(|(bp, cp)| (pattern_residual(&b_inf, &bp), pattern_residual(&hm.c, &cp)));
    Ok(SweepReport { points, candidates, b_inf, limit_det, pattern_residual })
}

/// Reduced three-port conditions in the limit of heavy bodies.
#[derive(Clone, Debug, PartialEq)]
pub struct WwwReport {
    pub www1: RankReport,
    pub www2_nominal: RankReport,
    pub www2_recomputed: RankReport,
    /// `rank(b, KGb, (KG)²b, (KG)³b) = 4`.
    pub kalman: RankReport,
}

/// `K`, `G`, `F`, `b`, `c` of the reduced 4-dimensional problem.
pub struct ReducedSystem {
    pub k: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub cm11: f64,
}

const KEEP: [usize; 4] = [1, 2, 4, 5];

pub fn reduced_system(hm: &HydroMatrices) -> Result<ReducedSystem> {
    let plant = Plant::new(hm)?;
    let (_, a_w, _, b_w) = coefficient_matrices(&plant);
    let m = hm.ports();
    let k = DMatrix::from_fn(4, 4, |i, j| a_w[(KEEP[i], KEEP[j])]);
    let b = DMatrix::from_fn(4, 1, |i, _| -b_w[(KEEP[i], m - 1)]);
    let c = DMatrix::from_fn(4, 1, |i, _| -hm.c[(KEEP[i], m - 1)]);
    let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / hm.m0, 1.0 / hm.m0, 1.0 / hm.j0[(1, 1)], 1.0 / hm.j0[(2, 2)]]));
    let mut f = DMatrix::zeros(4, 4);
    f[(0, 3)] = -1.0;
    f[(1, 2)] = 1.0;
    Ok(ReducedSystem { k, g, f, b, c, cm11: hm.cm[(0, 0)] })
}

pub fn www_check(hm: &HydroMatrices) -> Result<WwwReport> {
    let r = reduced_system(hm)?;
    let kg = &r.k * &r.g;
    let b1 = &kg * &r.b;
    let b2 = &kg * &b1;
    let b3 = &kg * &b2;
    let www1 = rank_check("WWW1: rank(c, b, KGb, (KG)^2b, (KG)^3b) = 4", &[r.c.clone(), r.b.clone(), b1.clone(), b2.clone(), b3.clone()], 4)?;
    let kalman = rank_check("rank(b, KGb, (KG)^2b, (KG)^3b) = 4", &[r.b.clone(), b1.clone(), b2.clone(), b3], 4)?;
    let www2 = |pairs: [(f64, f64); 2], name: &str| {
        let cols = [
            r.c.clone(),
            r.b.clone(),
            (&r.f * r.cm11 + &r.k * 2.0) * &r.g * &r.b,
            (&r.f * (pairs[0].0 * r.cm11) + &r.k * pairs[0].1) * &r.g * &b1,
            (&r.f * (pairs[1].0 * r.cm11) + &r.k * pairs[1].1) * &r.g * &b2,
        ];
        rank_check(name, &cols, 4)
    };
    Ok(WwwReport {
        www1,
        www2_nominal: www2(NOMINAL_PAIRS, "WWW2 = 4")?,
        www2_recomputed: www2(RECOMPUTED_PAIRS, "WWW2 (recomputed) = 4")?,
        kalman,
    })
}
