//! Closed triangulated hulls.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::ellipsoid::EllipsoidGeometry;
use crate::error::{Error, Result};
use crate::linalg::V3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Panel {
    pub centroid: V3,
    /// Unit normal pointing out of the body.
    pub normal: V3,
    pub area: f64,
    pub vertices: [usize; 3],
}

#[derive(Clone, Debug)]
pub struct PanelMesh {
    pub vertices: Vec<V3>,
    pub panels: Vec<Panel>,
}

/// Hull descriptions accepted by [`mesh_hull`].
pub enum HullShape<'a> {
    Ellipsoid(&'a EllipsoidGeometry),
    /// Solid of revolution about `e₁`: radius `profile(y₁)` on `[a, b]`, zero at both ends.
    Revolution { profile: &'a dyn Fn(f64) -> f64, a: f64, b: f64 },
}

/// Panelize a hull. Ellipsoids: subdivided icosahedron, 20·4^refinement panels.
/// Revolution solids: `6·2^r` meridional intervals by `8·2^r` azimuthal cells.
pub fn mesh_hull(shape: &HullShape, refinement: u32) -> Result<PanelMesh> {
    match shape {
        HullShape::Ellipsoid(g) => PanelMesh::ellipsoid(g.axes(), refinement),
        HullShape::Revolution { profile, a, b } => {
            let s = 1usize << refinement;
            PanelMesh::revolution(*profile, *a, *b, 6 * s, 8 * s)
        }
    }
}

impl PanelMesh {
    /// Build panels from triangles, orienting each so its normal points away from `center`.
    pub fn from_triangles(vertices: Vec<V3>, tris: &[[usize; 3]], center: V3) -> Result<Self> {
        let mut panels = Vec::with_capacity(tris.len());
        for t in tris {
            let [a, b, c] = *t;
            if a.max(b).max(c) >= vertices.len() {
                return Err(Error::Geometry(alloc::format!("triangle {t:?} references a missing vertex")));
            }
            let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
            let cr = (pb - pa).cross(&(pc - pa));
            let area = 0.5 * cr.norm();
            let centroid = (pa + pb + pc) / 3.0;
            let mut normal = cr / (2.0 * area);
            let mut verts = [a, b, c];
            if (centroid - center).dot(&normal) < 0.0 {
                normal = -normal;
                verts = [a, c, b];
            }
            panels.push(Panel { centroid, normal, area, vertices: verts });
        }
        let mesh = Self { vertices, panels };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.panels.iter().map(|p| p.area).sum()
    }

    /// `Σ area·normal`, zero for a closed surface.
    pub fn flux(&self) -> V3 {
        self.panels.iter().fold(V3::zeros(), |s, p| s + p.normal * p.area)
    }

    /// Enclosed volume by the divergence theorem.
    pub fn volume(&self) -> f64 {
        self.panels.iter().map(|p| p.centroid.dot(&p.normal) * p.area).sum::<f64>() / 3.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.panels.is_empty() {
            return Err(Error::Geometry("empty mesh".into()));
        }
        let total = self.area();
        let min = 1e-10 * total / self.panels.len() as f64;
        if let Some(i) = self.panels.iter().position(|p| !(p.area >= min)) {
            return Err(Error::Geometry(alloc::format!("degenerate panel {i}")));
        }
        let f = self.flux().norm();
        if f > 1e-6 * total {
            return Err(Error::Geometry(alloc::format!("surface not closed: |Σ area·n| = {f:e}")));
        }
        Ok(())
    }

    /// Panels sharing at least one vertex with each panel (excluding itself).
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut by_vertex: Vec<Vec<usize>> = alloc::vec![Vec::new(); self.vertices.len()];
        for (i, p) in self.panels.iter().enumerate() {
            for &v in &p.vertices {
                by_vertex[v].push(i);
            }
        }
        self.panels
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut n: Vec<usize> = p.vertices.iter().flat_map(|&v| by_vertex[v].iter().copied()).filter(|&j| j != i).collect();
                n.sort_unstable();
                n.dedup();
                n
            })
            .collect()
    }

    /// Panel permutation induced by the reflection `y_p → −y_p`, if the mesh is symmetric.
    pub fn reflection_map(&self, p: usize, tol: f64) -> Option<Vec<usize>> {
        let key = |c: &V3| -> (i64, i64, i64) {
            let q = 1.0 / tol;
            ((c.x * q).round() as i64, (c.y * q).round() as i64, (c.z * q).round() as i64)
        };
        let mut index = BTreeMap::new();
        for (i, pan) in self.panels.iter().enumerate() {
            index.insert(key(&pan.centroid), i);
        }
        let mut map = Vec::with_capacity(self.panels.len());
        for pan in &self.panels {
            let mut c = pan.centroid;
            c[p] = -c[p];
            map.push(*index.get(&key(&c))?);
        }
        Some(map)
    }

    /// Unit icosphere with `20·4^refinement` panels.
    pub fn icosphere(refinement: u32) -> Result<Self> {
        let (v, t) = icosphere_raw(refinement);
        Self::from_triangles(v, &t, V3::zeros())
    }

    /// Icosphere vertices scaled by the semi-axes `c`.
    pub fn ellipsoid(c: [f64; 3], refinement: u32) -> Result<Self> {
        if c.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Geometry(alloc::format!("semi-axes must be positive, got {c:?}")));
        }
        let (v, t) = icosphere_raw(refinement);
        let v = v.into_iter().map(|u| V3::new(c[0] * u.x, c[1] * u.y, c[2] * u.z)).collect();
        Self::from_triangles(v, &t, V3::zeros())
    }

    /// Solid of revolution about `e₁` with staggered rings so that every panel is
    /// mirror-symmetric about the meridian plane through its centroid.
    pub fn revolution(profile: &dyn Fn(f64) -> f64, a: f64, b: f64, n_intervals: usize, n_azimuth: usize) -> Result<Self> {
        if !(b > a) || n_intervals < 4 || n_intervals % 2 != 0 || n_azimuth < 4 || n_azimuth % 2 != 0 {
            return Err(Error::Geometry(alloc::format!(
                "revolution mesh needs a < b and even counts >= 4 (got [{a}, {b}], {n_intervals}, {n_azimuth})"
            )));
        }
        let scale = (b - a).max(profile(0.5 * (a + b)).abs());
        if profile(a).abs() > 1e-12 * scale || profile(b).abs() > 1e-12 * scale {
            return Err(Error::Geometry("open profile: radius must vanish at both ends".into()));
        }
        let pi = core::f64::consts::PI;
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let k_max = n_intervals;
        let mut verts = Vec::new();
        verts.push(V3::new(a, 0.0, 0.0));
        for k in 1..k_max {
            let y1 = mid - half * (pi * k as f64 / k_max as f64).cos();
            let rad = profile(y1);
            if !(rad > 0.0) || !rad.is_finite() {
                return Err(Error::Geometry(alloc::format!("profile radius {rad} at y1 = {y1} must be positive")));
            }
            let off = if k % 2 == 1 { 0.5 } else { 0.0 };
            for j in 0..n_azimuth {
                let th = 2.0 * pi * (j as f64 + off) / n_azimuth as f64;
                verts.push(V3::new(y1, rad * th.cos(), rad * th.sin()));
            }
        }
        let pole_b = verts.len();
        verts.push(V3::new(b, 0.0, 0.0));
        let ring = |k: usize, j: usize| 1 + (k - 1) * n_azimuth + (j % n_azimuth);
        let mut tris = Vec::new();
        for j in 0..n_azimuth {
            tris.push([0, ring(1, j), ring(1, j + 1)]);
            tris.push([pole_b, ring(k_max - 1, j + 1), ring(k_max - 1, j)]);
        }
        for k in 1..k_max - 1 {
            for j in 0..n_azimuth {
                if k % 2 == 1 {
                    // ring k offset by half a cell, ring k+1 aligned
                    tris.push([ring(k, j), ring(k, j + 1), ring(k + 1, j + 1)]);
                    tris.push([ring(k + 1, j), ring(k, j), ring(k + 1, j + 1)]);
                } else {
                    tris.push([ring(k, j), ring(k, j + 1), ring(k + 1, j)]);
                    tris.push([ring(k + 1, j), ring(k, j + 1), ring(k + 1, j + 1)]);
                }
            }
        }
        Self::from_triangles(verts, &tris, V3::new(mid, 0.0, 0.0))
    }
}

fn icosphere_raw(refinement: u32) -> (Vec<V3>, Vec<[usize; 3]>) {
    let p = 0.5 * (1.0 + 5f64.sqrt());
    let mut v: Vec<V3> = [
        (-1.0, p, 0.0),
        (1.0, p, 0.0),
        (-1.0, -p, 0.0),
        (1.0, -p, 0.0),
        (0.0, -1.0, p),
        (0.0, 1.0, p),
        (0.0, -1.0, -p),
        (0.0, 1.0, -p),
        (p, 0.0, -1.0),
        (p, 0.0, 1.0),
        (-p, 0.0, -1.0),
        (-p, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| V3::new(x, y, z).normalize())
    .collect();
    let mut t: Vec<[usize; 3]> = alloc::vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..refinement {
        let mut mids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(t.len() * 4);
        let mut mid = |a: usize, b: usize, v: &mut Vec<V3>| -> usize {
            let key = (a.min(b), a.max(b));
            *mids.entry(key).or_insert_with(|| {
                v.push((v[a] + v[b]).normalize());
                v.len() - 1
            })
        };
        for &[a, b, c] in &t {
            let ab = mid(a, b, &mut v);
            let bc = mid(b, c, &mut v);
            let ca = mid(c, a, &mut v);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        t = next;
    }
    (v, t)
}
