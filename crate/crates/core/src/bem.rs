//! Exterior Neumann problems by a constant-strength single-layer panel method.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, Matrix2, Vector2, LU};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::V3;
use crate::mesh::PanelMesh;

const FOUR_PI: f64 = 4.0 * core::f64::consts::PI;
/// Sources farther than this many panel diameters use one-point quadrature.
const FAR_FIELD: f64 = 2.0;
/// Relative tolerance on `Σ area·g` for Neumann data.
pub const COMPATIBILITY_TOL: f64 = 1e-8;

/// Trace and surface gradient of an exterior harmonic function at panel centroids.
#[derive(Clone, Debug)]
pub struct NeumannSolution {
    pub trace: Vec<f64>,
    /// Tangential gradient.
    pub surface_gradient: Vec<V3>,
    /// Prescribed `∂u/∂n` along the body-outward normal.
    pub data: Vec<f64>,
}

impl NeumannSolution {
    /// Full gradient at panel `i`: tangential part plus the prescribed normal derivative.
    pub fn gradient(&self, mesh: &PanelMesh, i: usize) -> V3 {
        self.surface_gradient[i] + mesh.panels[i].normal * self.data[i]
    }
}

struct GradStencil {
    neighbors: Vec<(usize, V3)>,
}

pub struct BemSolver {
    mesh: PanelMesh,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    single_layer: DMatrix<f64>,
    stencils: Vec<GradStencil>,
    size: f64,
}

impl BemSolver {
    /// Assemble and factor the influence matrices once; every right-hand side reuses them.
    pub fn new(mesh: PanelMesh) -> Result<Self> {
        mesh.validate()?;
        let n = mesh.len();
        let diam: Vec<f64> = mesh
            .panels
            .iter()
            .map(|p| {
                let v = p.vertices.map(|k| mesh.vertices[k]);
                (v[0] - v[1]).norm().max((v[1] - v[2]).norm()).max((v[2] - v[0]).norm())
            })
            .collect();
        let curvature = mean_curvature(&mesh);
        let mut dbl = DMatrix::<f64>::zeros(n, n);
        let mut sl = DMatrix::<f64>::zeros(n, n);
        for (i, pi) in mesh.panels.iter().enumerate() {
            let x = pi.centroid;
            for (j, pj) in mesh.panels.iter().enumerate() {
                if i == j {
                    sl[(i, i)] = self_potential(&mesh, i);
                    dbl[(i, i)] = -0.5 - 0.5 * curvature[i] * sl[(i, i)];
                    continue;
                }
                let r = (x - pj.centroid).norm();
                let (mut k, mut s) = (0.0, 0.0);
                if r > FAR_FIELD * diam[j] {
                    k = -pi.normal.dot(&(x - pj.centroid)) / (FOUR_PI * r * r * r) * pj.area;
                    s = pj.area / (FOUR_PI * r);
                } else {
                    let v = pj.vertices.map(|m| mesh.vertices[m]);
                    for q in 0..3 {
                        let y = v[q] * (2.0 / 3.0) + (v[(q + 1) % 3] + v[(q + 2) % 3]) / 6.0;
                        let d = x - y;
                        let rr = d.norm();
                        let w = pj.area / 3.0;
                        k -= pi.normal.dot(&d) / (FOUR_PI * rr * rr * rr) * w;
                        s += w / (FOUR_PI * rr);
                    }
                }
                dbl[(i, j)] = k;
                sl[(i, j)] = s;
            }
        }
        let lu = dbl.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular("panel influence matrix".into()));
        }
        let stencils = gradient_stencils(&mesh)?;
        let size = mesh.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Ok(Self { mesh, lu, single_layer: sl, stencils, size })
    }

    pub fn mesh(&self) -> &PanelMesh {
        &self.mesh
    }

    /// Solve `Δu = 0` outside the body, `∂u/∂n = data` on it, `u → 0` at infinity.
    pub fn solve_neumann(&self, data: &[f64]) -> Result<NeumannSolution> {
        let n = self.mesh.len();
        if data.len() != n {
            return Err(Error::Config(alloc::format!("expected {n} Neumann values, got {}", data.len())));
        }
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let net: f64 = self.mesh.panels.iter().zip(data).map(|(p, g)| p.area * g).sum();
        let residual = net.abs() / (self.mesh.area() * scale.max(f64::MIN_POSITIVE));
        // data that is itself roundoff (e.g. a moment arm parallel to the normal) always passes
        let floor = 1e-13 * self.mesh.area() * self.size;
        if scale > 0.0 && residual > COMPATIBILITY_TOL && net.abs() > floor {
            return Err(Error::Compatibility { residual });
        }
        let rhs = DVector::from_column_slice(data);
        let sigma = self.lu.solve(&rhs).ok_or_else(|| Error::Singular("panel influence matrix".into()))?;
        let trace: Vec<f64> = (&self.single_layer * sigma).iter().copied().collect();
        let surface_gradient = self.surface_gradient(&trace);
        Ok(NeumannSolution { trace, surface_gradient, data: data.to_vec() })
    }

    /// Tangential gradient from a weighted least-squares fit over the vertex neighborhood.
    pub fn surface_gradient(&self, trace: &[f64]) -> Vec<V3> {
        self.stencils
            .iter()
            .enumerate()
            .map(|(i, st)| st.neighbors.iter().fold(V3::zeros(), |g, (j, c)| g + c * (trace[*j] - trace[i])))
            .collect()
    }

    /// `Σ area·f(panel)` over the mesh.
    pub fn integrate<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        self.mesh.panels.iter().enumerate().map(|(i, p)| p.area * f(i)).sum()
    }
}

/// `∫ 1/(4π|x−y|) dy` over a flat triangle with `x` at its centroid.
fn self_potential(mesh: &PanelMesh, i: usize) -> f64 {
    let p = &mesh.panels[i];
    let v = p.vertices.map(|k| mesh.vertices[k]);
    let mut s = 0.0;
    for e in 0..3 {
        let (a, b) = (v[e], v[(e + 1) % 3]);
        let l = (b - a).norm();
        let r1 = (a - p.centroid).norm();
        let r2 = (b - p.centroid).norm();
        let t = (b - a) / l;
        let w = a - p.centroid;
        let d = (w - t * w.dot(&t)).norm();
        s += d * ((r1 + r2 + l) / (r1 + r2 - l)).ln();
    }
    s / FOUR_PI
}

fn gradient_stencils(mesh: &PanelMesh) -> Result<Vec<GradStencil>> {
    let nbrs = mesh.vertex_neighbors();
    mesh.panels
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let n = p.normal;
            let seed = if n.x.abs() < 0.9 { V3::x() } else { V3::y() };
            let t1 = (seed - n * seed.dot(&n)).normalize();
            let t2 = n.cross(&t1);
            let mut normal_eq = Matrix2::zeros();
            let local: Vec<(usize, Vector2<f64>, f64)> = nbrs[i]
                .iter()
                .map(|&j| {
                    let d = mesh.panels[j].centroid - p.centroid;
                    let dt = Vector2::new(d.dot(&t1), d.dot(&t2));
                    let w = 1.0 / d.norm_squared();
                    normal_eq += dt * dt.transpose() * w;
                    (j, dt, w)
                })
                .collect();
            let inv = normal_eq
                .try_inverse()
                .ok_or_else(|| Error::Geometry(alloc::format!("panel {i} has a degenerate neighborhood")))?;
            let neighbors = local
                .into_iter()
                .map(|(j, dt, w)| {
                    let c = inv * dt * w;
                    (j, t1 * c.x + t2 * c.y)
                })
                .collect();
            Ok(GradStencil { neighbors })
        })
        .collect()
}

/// Mean curvature at each panel from normal variation across its neighborhood.
fn mean_curvature(mesh: &PanelMesh) -> Vec<f64> {
    mesh.vertex_neighbors()
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            let p = &mesh.panels[i];
            let (mut num, mut den) = (0.0, 0.0);
            for &j in nb {
                let q = &mesh.panels[j];
                let d = q.centroid - p.centroid;
                num += (q.normal - p.normal).dot(&d);
                den += d.norm_squared();
            }
            num / den
        })
        .collect()
}
