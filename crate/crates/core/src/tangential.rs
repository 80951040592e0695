//! Tangential projection of a fourfold from seven of its tangent spaces and
//! the count of its general fiber.
//!
//! For a fourfold `Y` spanning `C^40`, the affine tangent spaces at seven
//! general points are 5-dimensional and together span a 35-dimensional `L`.
//! Projecting from `L` gives a rational map `τ: Y --> P^4`. The fiber over
//! `p = τ(u0)` is found by solving
//!
//! ```text
//!     proj · ζ(u) - λ p = 0
//! ```
//!
//! with each factor of `u` restricted to a random affine chart
//! `<r_i, u_i> = 1`. That leaves four chart coordinates plus `λ` against
//! five equations, and the Jacobian of this system at each solution decides
//! whether the fiber point is reduced. The search itself runs multistart
//! Newton on the dehomogenized form `proj · ζ(u) = p` (first factor free),
//! which has the same isolated solutions up to the scaling of the first
//! factor but none of the spurious `λ = 0` zeros along the base locus.

use crate::cjson;
use crate::error::{Error, Result};
use crate::linalg::{self, hstack, CMatrix, CVector, RankReport, C64};
use crate::multilinear::{chordal_distance_vec, ProjectivePoint};
use crate::secant::{ParamPoint, Parametrization};
use crate::seed::Seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentialProjection {
    pub centers: Vec<ParamPoint>,
    /// `ambient x dim L`, orthonormal columns.
    #[serde(with = "cjson::matrix")]
    pub l_basis: CMatrix,
    /// `codim x ambient`, orthonormal rows annihilating `L`.
    #[serde(with = "cjson::matrix")]
    pub proj: CMatrix,
    pub tangent_rank: RankReport,
}

impl TangentialProjection {
    pub fn target_dim(&self) -> usize {
        self.proj.nrows()
    }

    pub fn apply<P: Parametrization + ?Sized>(&self, model: &P, u: &ParamPoint) -> CVector {
        &self.proj * model.evaluate(u)
    }
}

fn unit_blocks(u: &ParamPoint) -> ParamPoint {
    ParamPoint {
        blocks: u
            .blocks
            .iter()
            .map(|b| {
                let n = linalg::norm(b);
                b.iter().map(|z| z / n).collect()
            })
            .collect(),
    }
}

pub fn make_tangential_projection<P: Parametrization + ?Sized>(
    model: &P,
    centers: Vec<ParamPoint>,
    rel_tol: f64,
) -> Result<TangentialProjection> {
    if centers.iter().any(ParamPoint::has_zero_block) {
        return Err(Error::structural("tangential center with a zero factor"));
    }
    let expected = centers.len() * model.cone_dim();
    if expected >= model.ambient_dim() {
        return Err(Error::structural(format!(
            "{} tangent spaces of dimension {} fill the ambient C^{}",
            centers.len(),
            model.cone_dim(),
            model.ambient_dim()
        )));
    }
    let blocks: Vec<CMatrix> = centers
        .par_iter()
        .map(|u| model.jacobian(&unit_blocks(u)))
        .collect();
    let stacked = hstack(&blocks);
    let (l_basis, report) = linalg::column_space(&stacked, rel_tol);
    if report.rank != expected {
        return Err(Error::DegenerateCenters {
            found: report.rank,
            expected,
        });
    }
    let (complement, _) = linalg::orthogonal_complement(&stacked, rel_tol);
    Ok(TangentialProjection {
        centers,
        l_basis,
        proj: complement.adjoint(),
        tangent_rank: report,
    })
}

pub fn random_tangential_projection<P: Parametrization + ?Sized>(
    model: &P,
    n_centers: usize,
    seed: Seed,
    rel_tol: f64,
) -> Result<TangentialProjection> {
    let mut rng = seed.rng();
    let centers = (0..n_centers)
        .map(|_| model.random_point(&mut rng))
        .collect();
    make_tangential_projection(model, centers, rel_tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberConfig {
    pub num_starts: usize,
    /// Stop once this many consecutive starts produced no new solution.
    pub stall_starts: usize,
    /// Threshold on `sigma_min / sigma_max` of the fiber Jacobian.
    pub reduced_tol: f64,
    pub max_newton_iters: usize,
    /// Chordal distance under which two solutions are the same point.
    pub dedup_tol: f64,
    /// Largest relative residual for a converged run to count as a solution.
    pub accept_tol: f64,
    /// Starts per parallel batch.
    pub batch: usize,
}

impl Default for FiberConfig {
    fn default() -> Self {
        FiberConfig {
            num_starts: 2000,
            stall_starts: 500,
            reduced_tol: 1e-6,
            max_newton_iters: 100,
            dedup_tol: 1e-6,
            accept_tol: 1e-8,
            batch: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberResult {
    /// `τ(u0)`, canonical representative.
    pub target: ProjectivePoint,
    pub u0: ParamPoint,
    pub solutions: Vec<ParamPoint>,
    /// Relative residual `|proj ζ(u) - λ p| / |proj ζ(u)|` per solution.
    pub residuals: Vec<f64>,
    /// Chordal distance between `τ(u)` and the target per solution.
    pub target_distances: Vec<f64>,
    /// Normalized smallest singular value of the fiber Jacobian per solution.
    pub jacobian_svs: Vec<f64>,
    pub residual_max: f64,
    pub min_jacobian_sv: f64,
    pub count: usize,
    pub starts_used: usize,
    pub converged_runs: usize,
    /// Median over converged runs of `|step_n| / |step_(n-1)|` at the last
    /// two full Newton steps; tiny for quadratic convergence.
    pub median_step_ratio: f64,
    pub warnings: Vec<String>,
}

impl FiberResult {
    pub fn all_reduced(&self, reduced_tol: f64) -> bool {
        self.jacobian_svs.iter().all(|&s| s > reduced_tol)
    }
}

/// Affine chart `{x : r^T x = 1}` with coordinates `x = base + N c`.
struct Chart {
    r: Vec<C64>,
    base: CVector,
    frame: CMatrix,
}

impl Chart {
    fn random(n: usize, rng: &mut crate::seed::Rng) -> Self {
        let r = linalg::random_vector(n, rng);
        let rr: f64 = r.iter().map(|z| z.norm_sqr()).sum();
        let base = CVector::from_iterator(n, r.iter().map(|z| z.conj() / rr));
        let (frame, _) =
            linalg::nullspace(&CMatrix::from_row_slice(1, n, &r), linalg::DEFAULT_RANK_TOL);
        Chart { r, base, frame }
    }

    fn to_coords(&self, x: &[C64]) -> Option<CVector> {
        let s: C64 = self.r.iter().zip(x).map(|(a, b)| a * b).sum();
        if s.norm() < 1e-12 * linalg::norm(x) {
            return None;
        }
        let xs = CVector::from_iterator(x.len(), x.iter().map(|z| z / s));
        Some(self.frame.adjoint() * (xs - &self.base))
    }

    fn from_coords(&self, c: &[C64]) -> Vec<C64> {
        (&self.base + &self.frame * CVector::from_column_slice(c))
            .as_slice()
            .to_vec()
    }
}

trait SquareSystem {
    fn residual(&self, z: &[C64]) -> CVector;
    fn jacobian(&self, z: &[C64]) -> CMatrix;
}

/// The gauged fiber system: chart coordinates of every factor plus `λ`.
struct GaugedSystem<'a, P: Parametrization + ?Sized> {
    model: &'a P,
    proj: &'a CMatrix,
    target: CVector,
    charts: Vec<Chart>,
}

impl<P: Parametrization + ?Sized> GaugedSystem<'_, P> {
    fn nvars(&self) -> usize {
        self.charts.iter().map(|c| c.frame.ncols()).sum::<usize>() + 1
    }

    fn point(&self, z: &[C64]) -> ParamPoint {
        let mut off = 0;
        let blocks = self
            .charts
            .iter()
            .map(|ch| {
                let n = ch.frame.ncols();
                let b = ch.from_coords(&z[off..off + n]);
                off += n;
                b
            })
            .collect();
        ParamPoint { blocks }
    }

    fn encode(&self, u: &ParamPoint) -> Option<Vec<C64>> {
        let mut z = Vec::with_capacity(self.nvars());
        for (ch, b) in self.charts.iter().zip(&u.blocks) {
            z.extend_from_slice(ch.to_coords(b)?.as_slice());
        }
        let image = self.proj * self.model.evaluate(&self.point(&z));
        z.push(self.target.dotc(&image));
        Some(z)
    }

    fn image(&self, z: &[C64]) -> CVector {
        self.proj * self.model.evaluate(&self.point(z))
    }
}

impl<P: Parametrization + ?Sized> SquareSystem for GaugedSystem<'_, P> {
    fn residual(&self, z: &[C64]) -> CVector {
        self.image(z) - &self.target * z[z.len() - 1]
    }

    fn jacobian(&self, z: &[C64]) -> CMatrix {
        let jz = self.proj * self.model.jacobian(&self.point(z));
        let n = self.nvars();
        let mut j = CMatrix::zeros(jz.nrows(), n);
        let (mut row_off, mut col_off) = (0, 0);
        for ch in &self.charts {
            let (dim, sz) = ch.frame.shape();
            let block = jz.columns(row_off, dim) * &ch.frame;
            j.view_mut((0, col_off), (jz.nrows(), sz)).copy_from(&block);
            row_off += dim;
            col_off += sz;
        }
        j.set_column(n - 1, &(-&self.target));
        j
    }
}

/// Dehomogenized system `proj ζ(u) = p`: the first factor is free (its
/// degree absorbs the scale) and the others live in their charts. Unlike the
/// gauged form it has no spurious zeros on the base locus of `τ`, where
/// `proj ζ` vanishes identically.
struct AffineSystem<'a, 'b, P: Parametrization + ?Sized> {
    gauged: &'b GaugedSystem<'a, P>,
}

impl<P: Parametrization + ?Sized> AffineSystem<'_, '_, P> {
    fn point(&self, z: &[C64]) -> ParamPoint {
        let g = self.gauged;
        let n0 = g.charts[0].frame.nrows();
        let mut blocks = vec![z[..n0].to_vec()];
        let mut off = n0;
        for ch in &g.charts[1..] {
            let n = ch.frame.ncols();
            blocks.push(ch.from_coords(&z[off..off + n]));
            off += n;
        }
        ParamPoint { blocks }
    }
}

impl<P: Parametrization + ?Sized> SquareSystem for AffineSystem<'_, '_, P> {
    fn residual(&self, z: &[C64]) -> CVector {
        let g = self.gauged;
        g.proj * g.model.evaluate(&self.point(z)) - &g.target
    }

    fn jacobian(&self, z: &[C64]) -> CMatrix {
        let g = self.gauged;
        let jz = g.proj * g.model.jacobian(&self.point(z));
        let n0 = g.charts[0].frame.nrows();
        let mut j = CMatrix::zeros(jz.nrows(), z.len());
        j.view_mut((0, 0), (jz.nrows(), n0))
            .copy_from(&jz.columns(0, n0));
        let (mut row_off, mut col_off) = (n0, n0);
        for ch in &g.charts[1..] {
            let (dim, sz) = ch.frame.shape();
            let block = jz.columns(row_off, dim) * &ch.frame;
            j.view_mut((0, col_off), (jz.nrows(), sz)).copy_from(&block);
            row_off += dim;
            col_off += sz;
        }
        j
    }
}

struct Run {
    z: Vec<C64>,
    step_ratio: f64,
}

fn newton<S: SquareSystem>(sys: &S, mut z: Vec<C64>, max_iters: usize) -> Option<Run> {
    let mut steps: Vec<f64> = Vec::new();
    let mut fnorm = sys.residual(&z).norm();
    for _ in 0..max_iters {
        let f = sys.residual(&z);
        let delta = sys.jacobian(&z).lu().solve(&(-f))?;
        let dnorm = delta.norm();
        if !dnorm.is_finite() {
            return None;
        }
        let znorm = linalg::norm(&z);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let trial: Vec<C64> = z
                .iter()
                .zip(delta.iter())
                .map(|(a, d)| a + d * alpha)
                .collect();
            let tn = sys.residual(&trial).norm();
            if tn.is_finite() && tn < fnorm {
                accepted = Some((trial, tn));
                break;
            }
            alpha *= 0.5;
        }
        let Some((next, tn)) = accepted else {
            // no descent: either at rounding level or stuck
            if dnorm <= 1e-10 * (1.0 + znorm) {
                break;
            }
            return None;
        };
        steps.push(dnorm * alpha);
        z = next;
        fnorm = tn;
        if dnorm <= 1e-14 * (1.0 + znorm) {
            break;
        }
        if linalg::norm(&z) > 1e8 {
            return None;
        }
    }
    let n = steps.len();
    let step_ratio = if n >= 2 && steps[n - 2] > 0.0 {
        steps[n - 1] / steps[n - 2]
    } else {
        0.0
    };
    Some(Run { z, step_ratio })
}

fn canonical_blocks(u: &ParamPoint) -> Vec<ProjectivePoint> {
    u.blocks
        .iter()
        .map(|b| ProjectivePoint::new(b).expect("chart points are nonzero"))
        .collect()
}

fn canonical_param(u: &ParamPoint) -> ParamPoint {
    ParamPoint {
        blocks: canonical_blocks(u)
            .into_iter()
            .map(|p| p.rep().to_vec())
            .collect(),
    }
}

/// Fiber Jacobian at unit-norm factors, in orthonormal coordinates of each
/// factor's orthogonal complement plus `log λ`; independent of the chart.
fn intrinsic_jacobian<P: Parametrization + ?Sized>(
    model: &P,
    proj: &CMatrix,
    u: &ParamPoint,
) -> CMatrix {
    let u = unit_blocks(u);
    let jz = proj * model.jacobian(&u);
    let mut cols: Vec<CMatrix> = Vec::new();
    let mut off = 0;
    for b in &u.blocks {
        let n = b.len();
        let row = CMatrix::from_row_slice(1, n, &b.iter().map(|z| z.conj()).collect::<Vec<_>>());
        let (perp, _) = linalg::nullspace(&row, linalg::DEFAULT_RANK_TOL);
        cols.push(jz.columns(off, n) * perp);
        off += n;
    }
    cols.push(CMatrix::from_columns(&[-(proj * model.evaluate(&u))]));
    hstack(&cols)
}

/// Largest factorwise chordal distance between two parameter points.
pub fn param_distance(u: &ParamPoint, v: &ParamPoint) -> f64 {
    u.blocks
        .iter()
        .zip(&v.blocks)
        .map(|(a, b)| chordal_distance_vec(a, b))
        .fold(0.0, f64::max)
}

fn sort_key(u: &ParamPoint) -> Vec<f64> {
    u.blocks
        .iter()
        .flatten()
        .flat_map(|z| [z.re, z.im])
        .collect()
}

/// Count the fiber of `τ` through a random point `τ(u0)`.
pub fn fiber_count<P: Parametrization + ?Sized>(
    model: &P,
    tp: &TangentialProjection,
    seed: Seed,
    cfg: &FiberConfig,
) -> Result<FiberResult> {
    let u0 = model.random_point(&mut seed.child("target").rng());
    fiber_count_at(
        model,
        tp,
        &u0,
        seed.child("chart"),
        seed.child("starts"),
        cfg,
    )
}

/// Fiber count with the preimage `u0`, the chart and the starts seeded separately.
pub fn fiber_count_at<P: Parametrization + ?Sized>(
    model: &P,
    tp: &TangentialProjection,
    u0: &ParamPoint,
    chart_seed: Seed,
    start_seed: Seed,
    cfg: &FiberConfig,
) -> Result<FiberResult> {
    let sizes: Vec<usize> = model.block_dims().iter().map(|n| n - 1).collect();
    if sizes.iter().sum::<usize>() + 1 != tp.target_dim() {
        return Err(Error::structural(format!(
            "fiber system is not square: {} unknowns, {} equations",
            sizes.iter().sum::<usize>() + 1,
            tp.target_dim()
        )));
    }
    let image0 = tp.apply(model, u0);
    if image0.norm() == 0.0 {
        return Err(Error::DegenerateInput(
            "target point lies in the base locus".into(),
        ));
    }
    let target = &image0 / C64::new(image0.norm(), 0.0);
    let mut chart_rng = chart_seed.rng();
    let charts: Vec<Chart> = model
        .block_dims()
        .iter()
        .map(|&n| Chart::random(n, &mut chart_rng))
        .collect();
    let gauged = GaugedSystem {
        model,
        proj: &tp.proj,
        target: target.clone(),
        charts,
    };
    let affine = AffineSystem { gauged: &gauged };
    let n_free = model.block_dims()[0];

    let mut found: Vec<ParamPoint> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    let mut converged_runs = 0;
    let mut stall = 0;
    let mut starts_used = 0;
    while starts_used < cfg.num_starts && stall < cfg.stall_starts {
        let batch_end = (starts_used + cfg.batch).min(cfg.num_starts);
        let runs: Vec<Option<(ParamPoint, f64)>> = (starts_used..batch_end)
            .into_par_iter()
            .map(|i| {
                let mut rng = start_seed.index(i as u64).rng();
                let z = linalg::random_vector(n_free + sizes[1..].iter().sum::<usize>(), &mut rng);
                let run = newton(&affine, z, cfg.max_newton_iters)?;
                let u = affine.point(&run.z);
                let image = gauged.image(&gauged.encode(&u)?);
                if image.norm() == 0.0
                    || chordal_distance_vec(image.as_slice(), target.as_slice()) > cfg.accept_tol
                {
                    return None;
                }
                Some((u, run.step_ratio))
            })
            .collect();
        for run in runs {
            starts_used += 1;
            stall += 1;
            let Some((u, ratio)) = run else { continue };
            converged_runs += 1;
            ratios.push(ratio);
            if found.iter().all(|v| param_distance(&u, v) > cfg.dedup_tol) {
                found.push(u);
                stall = 0;
            }
        }
    }

    let mut solutions: Vec<ParamPoint> = found.iter().map(canonical_param).collect();
    solutions.sort_by(|a, b| sort_key(a).partial_cmp(&sort_key(b)).expect("finite"));

    // Verification happens in the gauged system.
    let mut residuals = Vec::new();
    let mut target_distances = Vec::new();
    let mut jacobian_svs = Vec::new();
    let mut warnings = Vec::new();
    for (idx, u) in solutions.iter().enumerate() {
        let z = gauged
            .encode(u)
            .ok_or_else(|| Error::SolverIncomplete("solution lies on the chart boundary".into()))?;
        let image = gauged.image(&z);
        residuals.push(gauged.residual(&z).norm() / image.norm());
        target_distances.push(chordal_distance_vec(image.as_slice(), target.as_slice()));
        let sv = linalg::singular_values(&intrinsic_jacobian(model, &tp.proj, u));
        let normalized = sv.last().copied().unwrap_or(0.0) / sv[0];
        if normalized <= cfg.reduced_tol {
            warnings.push(format!(
                "solution {idx} has near-singular fiber Jacobian ({normalized:.3e}): non-reduced point"
            ));
        }
        jacobian_svs.push(normalized);
    }

    if !solutions
        .iter()
        .any(|u| param_distance(u, u0) <= cfg.dedup_tol)
    {
        return Err(Error::SolverIncomplete(format!(
            "constructed preimage not recovered among {} solutions after {} starts",
            solutions.len(),
            starts_used
        )));
    }

    ratios.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let median_step_ratio = ratios.get(ratios.len() / 2).copied().unwrap_or(f64::NAN);
    Ok(FiberResult {
        target: ProjectivePoint::new(target.as_slice())?,
        u0: canonical_param(u0),
        count: solutions.len(),
        residual_max: residuals.iter().copied().fold(0.0, f64::max),
        min_jacobian_sv: jacobian_svs.iter().copied().fold(f64::INFINITY, f64::min),
        solutions,
        residuals,
        target_distances,
        jacobian_svs,
        starts_used,
        converged_runs,
        median_step_ratio,
        warnings,
    })
}

/// Whether `point` lies in the affine tangent space of the model at `u`.
pub fn in_tangent_space<P: Parametrization + ?Sized>(
    model: &P,
    u: &ParamPoint,
    point: &CVector,
    rel_tol: f64,
) -> bool {
    let mut j = model.jacobian(&unit_blocks(u));
    for mut col in j.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= C64::new(n, 0.0);
        }
    }
    let base = linalg::rank_report(&j, rel_tol).rank;
    let p = point / C64::new(point.norm(), 0.0);
    let augmented = hstack(&[j, CMatrix::from_columns(&[p])]);
    linalg::rank_report(&augmented, rel_tol).rank == base
}

/// Points on the image of the line through `u` along factor `block`.
pub fn line_points<P: Parametrization + ?Sized>(
    model: &P,
    u: &ParamPoint,
    block: usize,
    n: usize,
    rng: &mut crate::seed::Rng,
) -> Vec<CVector> {
    (0..n)
        .map(|_| {
            let mut v = u.clone();
            v.blocks[block] = linalg::random_vector(u.blocks[block].len(), rng);
            model.evaluate(&v)
        })
        .collect()
}

/// The two coordinate lines through `u` (moving only the second or only the
/// third factor) lie in the tangent space at `u`: ten sample points on each.
pub fn tangent_lines_check<P: Parametrization + ?Sized>(
    model: &P,
    u: &ParamPoint,
    seed: Seed,
    rel_tol: f64,
) -> bool {
    let mut rng = seed.rng();
    [1, 2].iter().all(|&block| {
        line_points(model, u, block, 10, &mut rng)
            .iter()
            .all(|p| in_tangent_space(model, u, p, rel_tol))
    })
}
