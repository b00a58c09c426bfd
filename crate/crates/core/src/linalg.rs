//! Shorthand matrix types and a few dense helpers.

use alloc::vec::Vec;
use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector3};

pub type V3 = Vector3<f64>;
pub type M3 = Matrix3<f64>;
pub type V6 = SVector<f64, 6>;
pub type M6 = SMatrix<f64, 6, 6>;
pub type V12 = SVector<f64, 12>;
pub type M12 = SMatrix<f64, 12, 12>;

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(a: &V3) -> M3 {
    M3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

pub fn e(i: usize) -> V3 {
    let mut v = V3::zeros();
    v[i] = 1.0;
    v
}

/// Block matrix `[[a, b], [c, d]]` from 3x3 blocks.
pub fn block6(a: &M3, b: &M3, c: &M3, d: &M3) -> M6 {
    let mut m = M6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(a);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(b);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(c);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(d);
    m
}

pub fn stack6(top: &V3, bottom: &V3) -> V6 {
    V6::new(top.x, top.y, top.z, bottom.x, bottom.y, bottom.z)
}

pub fn split6(v: &V6) -> (V3, V3) {
    (V3::new(v[0], v[1], v[2]), V3::new(v[3], v[4], v[5]))
}

/// Stack `top` (3 x m) over `bottom` (3 x m).
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let m = top.ncols();
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), m);
    out.view_mut((0, 0), (top.nrows(), m)).copy_from(top);
    out.view_mut((top.nrows(), 0), (bottom.nrows(), m)).copy_from(bottom);
    out
}

/// Concatenate blocks with equal row counts side by side.
pub fn hcat(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        out.view_mut((0, c0), (rows, b.ncols())).copy_from(b);
        c0 += b.ncols();
    }
    out
}

pub fn to_dmatrix<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_fn(R, C, |i, j| m[(i, j)])
}

/// Row-major copy of a dense matrix.
pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}
