//! Control ports, body inertia and the hydrodynamic coupling matrices.

use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::bem::{BemSolver, NeumannSolution};
use crate::ellipsoid::{EllipsoidGeometry, SurfaceGrid};
use crate::error::{Error, Result};
use crate::linalg::{block6, M3, M6, V3};
use crate::quad;

/// Relative tolerance for the zero-mean condition on a port trace.
pub const MEAN_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PortShape {
    /// Smooth bump on the direction `normalize(y / scale)`, centered at `center`
    /// with angular radius `width`, reflected across every plane of nonzero parity.
    Bump { center: V3, width: f64 },
    /// Axial bump `b(y₁/scale₁)` plus its mirror image, for solids of revolution.
    Axial { center: f64, width: f64 },
}

#[derive(Clone, Debug, PartialEq)]
struct PortTerm {
    shape: PortShape,
    parity: [i8; 3],
}

/// Normal velocity profile `χ` of a flow-through port.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPort {
    pub name: String,
    /// Reflection parities across `y₁ = 0`, `y₂ = 0`, `y₃ = 0`; `0` means none.
    pub parity: [i8; 3],
    scale: V3,
    terms: Vec<PortTerm>,
}

fn bump(rho: f64) -> f64 {
    if rho.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - rho * rho)).exp()
    }
}

fn check_parity(parity: [i8; 3]) -> Result<()> {
    if parity.iter().any(|e| !matches!(e, -1..=1)) {
        return Err(Error::Config(alloc::format!("parities must be -1, 0 or 1, got {parity:?}")));
    }
    if !parity.contains(&-1) {
        return Err(Error::Config(alloc::format!("port parity {parity:?} has no odd plane, so its mean is not zero")));
    }
    Ok(())
}

impl ControlPort {
    /// Bump port with the given parity pattern. `scale` maps the hull onto the unit sphere.
    pub fn bump(name: &str, parity: [i8; 3], center: V3, width: f64, scale: V3) -> Result<Self> {
        check_parity(parity)?;
        if !(width > 0.0 && width < core::f64::consts::FRAC_PI_2) || center.norm() == 0.0 {
            return Err(Error::Config(alloc::format!("port {name}: bad bump center/width")));
        }
        if scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config(alloc::format!("port {name}: scale must be positive")));
        }
        Ok(Self {
            name: name.into(),
            parity,
            scale,
            terms: alloc::vec![PortTerm { shape: PortShape::Bump { center: center.normalize(), width }, parity }],
        })
    }

    /// Axisymmetric port `b(y₁) + ε₁ b(−y₁)` with parity `(ε₁, 1, 1)`; `center` and
    /// `width` are in units of `half_length`.
    pub fn axial(name: &str, eps1: i8, center: f64, width: f64, half_length: f64) -> Result<Self> {
        let parity = [eps1, 1, 1];
        check_parity(parity)?;
        if !(width > 0.0) || !(half_length > 0.0) {
            return Err(Error::Config(alloc::format!("port {name}: bad axial width")));
        }
        Ok(Self {
            name: name.into(),
            parity,
            scale: V3::new(half_length, 1.0, 1.0),
            terms: alloc::vec![PortTerm { shape: PortShape::Axial { center, width }, parity }],
        })
    }

    /// Sum of ports; a plane keeps its parity only if all parts agree on it.
    pub fn composite(name: &str, parts: &[&ControlPort]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Config("empty composite port".into()))?;
        if parts.iter().any(|p| p.scale != first.scale) {
            return Err(Error::Config(alloc::format!("port {name}: parts use different hull scales")));
        }
        let mut parity = first.parity;
        for p in parts {
            for k in 0..3 {
                if p.parity[k] != parity[k] {
                    parity[k] = 0;
                }
            }
        }
        check_parity(parity)?;
        Ok(Self {
            name: name.into(),
            parity,
            scale: first.scale,
            terms: parts.iter().flat_map(|p| p.terms.iter().cloned()).collect(),
        })
    }

    pub fn eval(&self, y: &V3) -> f64 {
        let u = y.component_div(&self.scale);
        self.terms.iter().map(|t| term_value(t, &u)).sum()
    }
}

fn term_value(t: &PortTerm, u: &V3) -> f64 {
    match t.shape {
        PortShape::Axial { center, width } => {
            bump((u.x - center) / width) + t.parity[0] as f64 * bump((-u.x - center) / width)
        }
        PortShape::Bump { center, width } => {
            let dir = u.normalize();
            let mut s = 0.0;
            for mask in 0..8u32 {
                let mut sign = 1.0;
                let mut v = dir;
                let mut skip = false;
                for k in 0..3 {
                    if mask & (1 << k) != 0 {
                        if t.parity[k] == 0 {
                            skip = true;
                        }
                        sign *= t.parity[k] as f64;
                        v[k] = -v[k];
                    }
                }
                if skip {
                    continue;
                }
                let ang = v.dot(&center).clamp(-1.0, 1.0).acos();
                s += sign * bump(ang / width);
            }
            s
        }
    }
}

/// Parity patterns of the six standard ports.
pub const STANDARD_PARITIES: [[i8; 3]; 6] = [[-1, 1, 1], [1, -1, 1], [1, 1, -1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]];

/// Default bump center (positive octant) and angular radius.
pub fn default_bump() -> (V3, f64) {
    (V3::new(1.0, 1.0, 1.0).normalize(), 0.5)
}

/// Named port sets: `standard-6`, `standard-4` (χ₁, χ₄, χ₅, χ₆), `standard-3`
/// (χ₁, χ₄, χ₅+χ₆) on a hull with semi-axes `scale`.
pub fn preset_ports(preset: &str, scale: V3) -> Result<Vec<ControlPort>> {
    let (c, w) = default_bump();
    let all: Vec<ControlPort> = STANDARD_PARITIES
        .iter()
        .enumerate()
        .map(|(k, p)| ControlPort::bump(&alloc::format!("chi{}", k + 1), *p, c, w, scale))
        .collect::<Result<_>>()?;
    match preset {
        "standard-6" => Ok(all),
        "standard-4" => Ok(alloc::vec![all[0].clone(), all[3].clone(), all[4].clone(), all[5].clone()]),
        "standard-3" => {
            let c56 = ControlPort::composite("chi5+chi6", &[&all[4], &all[5]])?;
            Ok(alloc::vec![all[0].clone(), all[3].clone(), c56])
        }
        other => Err(Error::Config(alloc::format!("unknown port preset '{other}'"))),
    }
}

/// Two odd axisymmetric ports for a solid of revolution on `[−half_length, half_length]`.
pub fn axial_ports(half_length: f64) -> Result<Vec<ControlPort>> {
    Ok(alloc::vec![
        ControlPort::axial("axial1", -1, 0.45, 0.3, half_length)?,
        ControlPort::axial("axial2", -1, 0.75, 0.2, half_length)?,
    ])
}

/// Rigid-body mass properties about the center of buoyancy.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyInertia {
    pub m0: f64,
    pub j0: M3,
    pub lambda_scale: f64,
}

impl BodyInertia {
    /// Uniform ellipsoid of density `rho`.
    pub fn ellipsoid(geom: &EllipsoidGeometry, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::Config(alloc::format!("density must be positive, got {rho}")));
        }
        let c = geom.axes();
        let m0 = rho * geom.volume();
        let j0 = M3::from_diagonal(&V3::new(
            m0 / 5.0 * (c[1] * c[1] + c[2] * c[2]),
            m0 / 5.0 * (c[0] * c[0] + c[2] * c[2]),
            m0 / 5.0 * (c[0] * c[0] + c[1] * c[1]),
        ));
        Ok(Self { m0, j0, lambda_scale: 1.0 })
    }

    /// Solid of revolution with radius `profile(y₁)` and axial density `rho(y₁)`.
    pub fn revolution(profile: &dyn Fn(f64) -> f64, a: f64, b: f64, rho: &dyn Fn(f64) -> f64) -> Result<Self> {
        let pi = core::f64::consts::PI;
        let q = |f: &dyn Fn(f64) -> f64| quad::integrate(f, a, b, 1e-12, 0.0);
        let m0 = q(&|s| rho(s) * pi * profile(s).powi(2))?;
        let j1 = q(&|s| rho(s) * pi * profile(s).powi(4) / 2.0)?;
        let j2 = q(&|s| rho(s) * (pi * profile(s).powi(2) * s * s + pi * profile(s).powi(4) / 4.0))?;
        if !(m0 > 0.0 && j1 > 0.0 && j2 > 0.0) {
            return Err(Error::Config("revolution body has non-positive mass or inertia".into()));
        }
        Ok(Self { m0, j0: M3::from_diagonal(&V3::new(j1, j2, j2)), lambda_scale: 1.0 })
    }

    pub fn scale_density(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Config(alloc::format!("density scale must be positive, got {lambda}")));
        }
        Ok(Self { m0: self.m0 * lambda, j0: self.j0 * lambda, lambda_scale: self.lambda_scale * lambda })
    }
}

/// Where the body potentials come from.
pub enum PotentialSource<'a> {
    /// Closed-form ellipsoid potentials on a tensor grid; port potentials still from panels.
    Analytic { geom: &'a EllipsoidGeometry, grid: &'a SurfaceGrid, panels: &'a BemSolver },
    Bem(&'a BemSolver),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AssemblyDiagnostics {
    /// `max |∫ν_iφ_j − ∫(∂φ_i/∂ν)φ_j|`.
    pub dual_residual: f64,
    /// Antisymmetric part of `M` and `J` before symmetrization.
    pub asymmetry: f64,
    /// Worst `|∫χ| / ∫|χ|` over ports.
    pub port_mean: f64,
}

#[derive(Clone, Debug)]
pub struct HydroMatrices {
    pub m0: f64,
    pub j0: M3,
    pub m: M3,
    pub j: M3,
    pub n: M3,
    pub cm: DMatrix<f64>,
    pub cj: DMatrix<f64>,
    pub lm: Vec<M3>,
    pub rm: Vec<M3>,
    pub lj: Vec<M3>,
    pub rj: Vec<M3>,
    pub wm: Vec<DMatrix<f64>>,
    pub wj: Vec<DMatrix<f64>>,
    pub jscript: M6,
    /// `−(C^M; C^J)`, 6×m.
    pub c: DMatrix<f64>,
    pub port_names: Vec<String>,
    pub parities: Vec<[i8; 3]>,
    pub lambda_scale: f64,
    pub diagnostics: AssemblyDiagnostics,
}

struct Sample {
    y: V3,
    n: V3,
    w: f64,
    phi: [f64; 3],
    grad_phi: [V3; 3],
    varphi: [f64; 3],
    grad_varphi: [V3; 3],
    chi: Vec<f64>,
}

fn port_mean(samples: &[Sample], p: usize) -> f64 {
    let (s, a) = samples.iter().fold((0.0, 0.0), |(s, a), q| (s + q.w * q.chi[p], a + q.w * q.chi[p].abs()));
    if a == 0.0 {
        0.0
    } else {
        s.abs() / a
    }
}

fn analytic_samples(geom: &EllipsoidGeometry, grid: &SurfaceGrid, ports: &[ControlPort]) -> Result<Vec<Sample>> {
    grid.nodes
        .iter()
        .map(|g| {
            let mut s = Sample {
                y: g.y,
                n: g.normal,
                w: g.weight,
                phi: [0.0; 3],
                grad_phi: [V3::zeros(); 3],
                varphi: [0.0; 3],
                grad_varphi: [V3::zeros(); 3],
                chi: ports.iter().map(|p| p.eval(&g.y)).collect(),
            };
            for i in 0..3 {
                s.phi[i] = geom.phi_boundary(i, &g.y)?;
                s.grad_phi[i] = geom.grad_phi_boundary(i, &g.y)?;
                s.varphi[i] = geom.varphi_boundary(i, &g.y)?;
                s.grad_varphi[i] = geom.grad_varphi_boundary(i, &g.y)?;
            }
            Ok(s)
        })
        .collect()
}

fn panel_samples(bem: &BemSolver, ports: &[ControlPort]) -> Result<Vec<Sample>> {
    let mesh = bem.mesh();
    let mut phi = Vec::with_capacity(3);
    let mut varphi = Vec::with_capacity(3);
    for i in 0..3 {
        let d: Vec<f64> = mesh.panels.iter().map(|p| p.normal[i]).collect();
        phi.push(bem.solve_neumann(&d)?);
        let d: Vec<f64> = mesh.panels.iter().map(|p| p.centroid.cross(&p.normal)[i]).collect();
        varphi.push(bem.solve_neumann(&d)?);
    }
    Ok(mesh
        .panels
        .iter()
        .enumerate()
        .map(|(k, p)| Sample {
            y: p.centroid,
            n: p.normal,
            w: p.area,
            phi: [0, 1, 2].map(|i| phi[i].trace[k]),
            grad_phi: [0, 1, 2].map(|i| phi[i].gradient(mesh, k)),
            varphi: [0, 1, 2].map(|i| varphi[i].trace[k]),
            grad_varphi: [0, 1, 2].map(|i| varphi[i].gradient(mesh, k)),
            chi: ports.iter().map(|q| q.eval(&p.centroid)).collect(),
        })
        .collect())
}

/// Potential `ψ` of a port: `∂ψ/∂n = −χ` on the panels.
pub fn port_potential(bem: &BemSolver, port: &ControlPort) -> Result<NeumannSolution> {
    let data: Vec<f64> = bem.mesh().panels.iter().map(|p| -port.eval(&p.centroid)).collect();
    bem.solve_neumann(&data)
}

fn mat3<F: Fn(usize, usize) -> f64>(f: F) -> M3 {
    M3::from_fn(f)
}

/// Assemble every coupling matrix from boundary integrals.
pub fn assemble(source: &PotentialSource, ports: &[ControlPort], inertia: &BodyInertia) -> Result<HydroMatrices> {
    let (samples, bem) = match source {
        PotentialSource::Analytic { geom, grid, panels } => (analytic_samples(geom, grid, ports)?, *panels),
        PotentialSource::Bem(b) => (panel_samples(b, ports)?, *b),
    };
    let m = ports.len();
    let mut diag = AssemblyDiagnostics::default();
    for p in 0..m {
        let mean = port_mean(&samples, p);
        diag.port_mean = diag.port_mean.max(mean);
        if mean > MEAN_TOL {
            return Err(Error::Compatibility { residual: mean });
        }
    }
    let int = |f: &dyn Fn(&Sample) -> f64| samples.iter().map(|s| s.w * f(s)).sum::<f64>();

    // ν = −n
    let m_raw = mat3(|i, j| -int(&|s| s.n[i] * s.phi[j]));
    let m_dual = mat3(|i, j| -int(&|s| s.grad_phi[i].dot(&s.n) * s.phi[j]));
    let j_raw = mat3(|i, j| -int(&|s| s.y.cross(&s.n)[i] * s.varphi[j]));
    let n_mat = mat3(|i, j| -int(&|s| s.n[i] * s.varphi[j]));
    diag.dual_residual = (m_raw - m_dual).abs().max();
    diag.asymmetry = (m_raw - m_raw.transpose()).abs().max().max((j_raw - j_raw.transpose()).abs().max()) / 2.0;
    let m_sym = (m_raw + m_raw.transpose()) / 2.0;
    let j_sym = (j_raw + j_raw.transpose()) / 2.0;

    let cm = DMatrix::from_fn(3, m, |i, j| int(&|s| s.phi[i] * s.chi[j]));
    let cj = DMatrix::from_fn(3, m, |i, j| int(&|s| s.varphi[i] * s.chi[j]));
    let lm = (0..m).map(|p| mat3(|i, j| int(&|s| s.grad_phi[j][i] * s.chi[p]))).collect();
    let rm = (0..m).map(|p| mat3(|i, j| int(&|s| s.grad_varphi[j][i] * s.chi[p]))).collect();
    let lj = (0..m).map(|p| mat3(|i, j| int(&|s| s.y.cross(&s.grad_phi[j])[i] * s.chi[p]))).collect();
    let rj = (0..m).map(|p| mat3(|i, j| int(&|s| s.y.cross(&s.grad_varphi[j])[i] * s.chi[p]))).collect();

    let mesh = bem.mesh();
    let psi: Vec<NeumannSolution> = ports.iter().map(|p| port_potential(bem, p)).collect::<Result<_>>()?;
    let grad_psi: Vec<Vec<V3>> = psi.iter().map(|s| (0..mesh.len()).map(|k| s.gradient(mesh, k)).collect()).collect();
    let chi_panel: Vec<Vec<f64>> = ports.iter().map(|q| mesh.panels.iter().map(|p| q.eval(&p.centroid)).collect()).collect();
    let pint = |f: &dyn Fn(usize) -> f64| bem.integrate(f);
    let wm = (0..m)
        .map(|p| DMatrix::from_fn(3, m, |i, j| pint(&|k| grad_psi[j][k][i] * chi_panel[p][k])))
        .collect();
    let wj = (0..m)
        .map(|p| DMatrix::from_fn(3, m, |i, j| pint(&|k| mesh.panels[k].centroid.cross(&grad_psi[j][k])[i] * chi_panel[p][k])))
        .collect();

    let mut c = DMatrix::zeros(6, m);
    c.view_mut((0, 0), (3, m)).copy_from(&(-&cm));
    c.view_mut((3, 0), (3, m)).copy_from(&(-&cj));
    let mut hm = HydroMatrices {
        m0: inertia.m0,
        j0: inertia.j0,
        m: m_sym,
        j: j_sym,
        n: n_mat,
        cm,
        cj,
        lm,
        rm,
        lj,
        rj,
        wm,
        wj,
        jscript: M6::zeros(),
        c,
        port_names: ports.iter().map(|p| p.name.clone()).collect(),
        parities: ports.iter().map(|p| p.parity).collect(),
        lambda_scale: inertia.lambda_scale,
        diagnostics: diag,
    };
    hm.jscript = jscript(&hm, inertia)?;
    Ok(hm)
}

fn jscript(hm: &HydroMatrices, inertia: &BodyInertia) -> Result<M6> {
    let rigid = block6(&(M3::identity() * inertia.m0), &M3::zeros(), &M3::zeros(), &inertia.j0);
    let added = block6(&hm.m, &hm.n, &hm.n.transpose(), &hm.j);
    let js = rigid + added;
    if js.cholesky().is_none() {
        return Err(Error::Assembly("inertia matrix 𝒥 is not positive definite".into()));
    }
    Ok(js)
}

impl HydroMatrices {
    pub fn ports(&self) -> usize {
        self.c.ncols()
    }

    /// Swap in new rigid-body inertia; hydrodynamic blocks are unchanged.
    pub fn with_inertia(&self, inertia: &BodyInertia) -> Result<Self> {
        let mut hm = self.clone();
        hm.m0 = inertia.m0;
        hm.j0 = inertia.j0;
        hm.lambda_scale = inertia.lambda_scale;
        hm.jscript = jscript(&hm, inertia)?;
        Ok(hm)
    }

    pub fn scale_density(&self, lambda: f64) -> Result<Self> {
        let inertia = BodyInertia { m0: self.m0, j0: self.j0, lambda_scale: self.lambda_scale }.scale_density(lambda)?;
        self.with_inertia(&inertia)
    }

    /// `G_p = (L^M_p, R^M_p; L^J_p, R^J_p)`.
    pub fn g(&self, p: usize) -> M6 {
        block6(&self.lm[p], &self.rm[p], &self.lj[p], &self.rj[p])
    }

    /// `(W^M_p; W^J_p)`, 6×m.
    pub fn w(&self, p: usize) -> DMatrix<f64> {
        let m = self.ports();
        let mut w = DMatrix::zeros(6, m);
        w.view_mut((0, 0), (3, m)).copy_from(&self.wm[p]);
        w.view_mut((3, 0), (3, m)).copy_from(&self.wj[p]);
        w
    }

    /// Named blocks in a fixed order for reporting.
    pub fn blocks(&self) -> Vec<(String, DMatrix<f64>)> {
        use crate::linalg::to_dmatrix;
        let mut out: Vec<(String, DMatrix<f64>)> = alloc::vec![
            ("m0".into(), DMatrix::from_element(1, 1, self.m0)),
            ("J0".into(), to_dmatrix(&self.j0)),
            ("M".into(), to_dmatrix(&self.m)),
            ("J".into(), to_dmatrix(&self.j)),
            ("N".into(), to_dmatrix(&self.n)),
            ("CM".into(), self.cm.clone()),
            ("CJ".into(), self.cj.clone()),
            ("C".into(), self.c.clone()),
            ("Jscript".into(), to_dmatrix(&self.jscript)),
        ];
        for p in 0..self.ports() {
            let k = p + 1;
            out.push((alloc::format!("LM{k}"), to_dmatrix(&self.lm[p])));
            out.push((alloc::format!("RM{k}"), to_dmatrix(&self.rm[p])));
            out.push((alloc::format!("LJ{k}"), to_dmatrix(&self.lj[p])));
            out.push((alloc::format!("RJ{k}"), to_dmatrix(&self.rj[p])));
            out.push((alloc::format!("WM{k}"), self.wm[p].clone()));
            out.push((alloc::format!("WJ{k}"), self.wj[p].clone()));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    M,
    J,
    N,
    CM,
    CJ,
    LM,
    RM,
    WM,
    LJ,
    RJ,
    WJ,
}

pub const ALL_KINDS: [MatrixKind; 11] = [
    MatrixKind::M,
    MatrixKind::J,
    MatrixKind::N,
    MatrixKind::CM,
    MatrixKind::CJ,
    MatrixKind::LM,
    MatrixKind::RM,
    MatrixKind::WM,
    MatrixKind::LJ,
    MatrixKind::RJ,
    MatrixKind::WJ,
];

/// Whether reflection symmetry across plane `p` forces entry `(i, j)` to vanish.
/// `eps_q` is the parity of the port indexing `L_q`, `R_q`, `W_q`; `eps_j` the parity
/// of the port in column `j` of `C` and `W`. Indices are zero-based; parity 0 never forces.
pub fn symmetry_zero_predicate(kind: MatrixKind, i: usize, j: usize, p: usize, eps_q: i8, eps_j: i8) -> bool {
    let sgn = |d: usize| if d % 2 == 0 { 1i8 } else { -1 };
    let (di, dj) = ((i == p) as usize, (j == p) as usize);
    let si = sgn(di);
    let sij = sgn(di + dj);
    match kind {
        MatrixKind::M | MatrixKind::J => sij == -1,
        MatrixKind::N => sij == 1,
        MatrixKind::CM => eps_j != 0 && si == -eps_j,
        MatrixKind::CJ => eps_j != 0 && si == eps_j,
        MatrixKind::LM => eps_q != 0 && sij == -eps_q,
        MatrixKind::RM => eps_q != 0 && sij == eps_q,
        MatrixKind::LJ => eps_q != 0 && sij == eps_q,
        MatrixKind::RJ => eps_q != 0 && sij == -eps_q,
        MatrixKind::WM => eps_q * eps_j != 0 && si == -eps_q * eps_j,
        MatrixKind::WJ => eps_q * eps_j != 0 && si == eps_q * eps_j,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroViolation {
    pub kind: MatrixKind,
    /// Port index for the per-port families.
    pub port: Option<usize>,
    pub i: usize,
    pub j: usize,
    pub plane: usize,
    pub relative: f64,
}

/// Every entry flagged by [`symmetry_zero_predicate`] for the given planes, measured
/// against the largest entry of its family (added mass `M, J, N`; `C^M, C^J`;
/// `L, R`; `W`). Returns the worst relative size and the entries exceeding `tol`.
pub fn check_zero_structure(hm: &HydroMatrices, planes: &[usize], tol: f64) -> (f64, Vec<ZeroViolation>) {
    use crate::linalg::to_dmatrix;
    let m = hm.ports();
    let fam_added = hm.m.abs().max().max(hm.j.abs().max()).max(hm.n.abs().max());
    let fam_c = hm.cm.abs().max().max(hm.cj.abs().max());
    let fam_g = (0..m).map(|p| hm.g(p).abs().max()).fold(0.0, f64::max);
    let fam_w = (0..m).map(|p| hm.wm[p].abs().max().max(hm.wj[p].abs().max())).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    let mut visit = |kind: MatrixKind, port: Option<usize>, mat: &DMatrix<f64>, norm: f64| {
        if norm == 0.0 {
            return;
        }
        for &p in planes {
            let eq = port.map_or(0, |q| hm.parities[q][p]);
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    let ej = if matches!(kind, MatrixKind::CM | MatrixKind::CJ | MatrixKind::WM | MatrixKind::WJ) { hm.parities[j][p] } else { 0 };
                    if symmetry_zero_predicate(kind, i, j, p, eq, ej) {
                        let rel = mat[(i, j)].abs() / norm;
                        worst = worst.max(rel);
                        if rel > tol {
                            bad.push(ZeroViolation { kind, port, i, j, plane: p, relative: rel });
                        }
                    }
                }
            }
        }
    };
    visit(MatrixKind::M, None, &to_dmatrix(&hm.m), fam_added);
    visit(MatrixKind::J, None, &to_dmatrix(&hm.j), fam_added);
    visit(MatrixKind::N, None, &to_dmatrix(&hm.n), fam_added);
    visit(MatrixKind::CM, None, &hm.cm, fam_c);
    visit(MatrixKind::CJ, None, &hm.cj, fam_c);
    for q in 0..m {
        visit(MatrixKind::LM, Some(q), &to_dmatrix(&hm.lm[q]), fam_g);
        visit(MatrixKind::RM, Some(q), &to_dmatrix(&hm.rm[q]), fam_g);
        visit(MatrixKind::LJ, Some(q), &to_dmatrix(&hm.lj[q]), fam_g);
        visit(MatrixKind::RJ, Some(q), &to_dmatrix(&hm.rj[q]), fam_g);
        visit(MatrixKind::WM, Some(q), &hm.wm[q], fam_w);
        visit(MatrixKind::WJ, Some(q), &hm.wj[q], fam_w);
    }
    (worst, bad)
}
