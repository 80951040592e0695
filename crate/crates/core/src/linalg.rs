//! Dense complex linear algebra helpers on top of nalgebra.
//!
//! Everything that decides a dimension goes through [`rank_report`], which
//! counts singular values above `rel_tol * sigma_max` and records the gap
//! between the last kept and the first dropped singular value.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Default relative threshold for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Standard complex Gaussian: real and imaginary parts i.i.d. N(0, 1/2).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    (0..n).map(|_| complex_gaussian(rng)).collect()
}

pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    // Column-major fill so the draw order is fixed by (col, row).
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian inner product `<x, y> = sum conj(x_i) y_i`.
pub fn hdot(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

/// Outcome of a thresholded rank decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    /// `sigma[rank-1] / sigma[rank]`; `None` when no singular value was dropped.
    pub gap_ratio: Option<f64>,
    pub sigma_max: f64,
}

pub fn rank_from_singular_values(sv: &[f64], rel_tol: f64) -> RankReport {
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    if sigma_max <= 0.0 || !sigma_max.is_finite() {
        return RankReport {
            rank: 0,
            gap_ratio: None,
            sigma_max,
        };
    }
    let cutoff = rel_tol * sigma_max;
    let rank = sv.iter().filter(|&&s| s > cutoff).count();
    let gap_ratio = if rank < sv.len() && rank > 0 {
        Some(sv[rank - 1] / sv[rank].max(f64::MIN_POSITIVE))
    } else {
        None
    };
    RankReport {
        rank,
        gap_ratio,
        sigma_max,
    }
}

pub fn rank_report(m: &CMatrix, rel_tol: f64) -> RankReport {
    rank_from_singular_values(&singular_values(m), rel_tol)
}

/// Full SVD `m = U diag(s) V^H` with `U` square. Wide inputs are padded with
/// zero columns so the complete left basis is available.
fn full_left_svd(m: &CMatrix) -> (CMatrix, Vec<f64>) {
    let (rows, cols) = m.shape();
    let padded = if cols < rows {
        let mut p = CMatrix::zeros(rows, rows);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(true, false);
    let u = svd.u.expect("u requested");
    let s = svd.singular_values.iter().copied().collect();
    (u, s)
}

/// Orthonormal basis (as columns) of the numerical column space of `m`.
pub fn column_space(m: &CMatrix, rel_tol: f64) -> (CMatrix, RankReport) {
    let (u, s) = full_left_svd(m);
    let report = rank_from_singular_values(&s[..m.nrows().min(m.ncols())], rel_tol);
    (u.columns(0, report.rank).into_owned(), report)
}

/// Orthonormal basis (as columns) of the orthogonal complement of the
/// numerical column space of `m`.
pub fn orthogonal_complement(m: &CMatrix, rel_tol: f64) -> (CMatrix, RankReport) {
    let rows = m.nrows();
    let (u, s) = full_left_svd(m);
    let report = rank_from_singular_values(&s[..rows.min(m.ncols())], rel_tol);
    (
        u.columns(report.rank, rows - report.rank).into_owned(),
        report,
    )
}

/// Orthonormal basis (as columns) of the numerical right nullspace of `m`.
pub fn nullspace(m: &CMatrix, rel_tol: f64) -> (CMatrix, RankReport) {
    let (rows, cols) = m.shape();
    let padded = if rows < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let report = rank_from_singular_values(&s[..rows.min(cols)], rel_tol);
    let basis = v_t.rows(report.rank, cols - report.rank).adjoint();
    (basis, report)
}

/// Ratio of the largest to the smallest singular value.
pub fn condition_number(m: &CMatrix) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Kronecker product of two vectors, `x` as the outer (slow) index.
pub fn kron(x: &[C64], y: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(x.len() * y.len());
    for xi in x {
        for yj in y {
            out.push(xi * yj);
        }
    }
    out
}

/// Horizontal concatenation of equally tall blocks.
pub fn hstack(blocks: &[CMatrix]) -> CMatrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack: row mismatch");
        out.view_mut((0, offset), (rows, b.ncols())).copy_from(b);
        offset += b.ncols();
    }
    out
}

/// Sine of the largest principal angle between two subspaces given by
/// orthonormal column bases of equal dimension.
pub fn subspace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let residual = a - b * (b.adjoint() * a);
    singular_values(&residual).first().copied().unwrap_or(0.0)
}
