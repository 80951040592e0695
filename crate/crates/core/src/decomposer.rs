//! Multistart complex CP decomposition and clustering of the results into
//! inequivalent decompositions.
//!
//! Each start runs alternating least squares until the objective stalls,
//! then a Levenberg–Marquardt polish on the full residual. The normal
//! matrix of the polish is assembled from the factor Gram matrices rather
//! than from the explicit Jacobian, which keeps a rank-8 `(3,6,6)` step at a
//! 120 x 120 Hermitian solve.

use crate::assignment::hungarian;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64};
use crate::multilinear::{
    assemble, flatten, simple_tensor_distance, Decomposition, ProjectivePoint, Shape3,
    SimpleTensor, Tensor3,
};
use crate::seed::Seed;
use nalgebra::Cholesky;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub num_starts: usize,
    pub als_max_iters: usize,
    /// ALS stops when the relative decrease of the objective falls below this.
    pub als_rel_tol: f64,
    pub polish_max_iters: usize,
    /// Target relative residual of the polish.
    pub polish_tol: f64,
    /// A run succeeds iff its final relative residual is below this.
    pub success_residual: f64,
    /// Matching threshold (chordal distance in `P^N`) for equivalent decompositions.
    pub cluster_tol: f64,
    /// Largest allowed `max_r |a_r||b_r||c_r| / |T|` for a non-degenerate solution.
    pub degeneracy_ratio: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            num_starts: 2000,
            als_max_iters: 30,
            als_rel_tol: 1e-10,
            polish_max_iters: 1000,
            polish_tol: 1e-13,
            success_residual: 1e-8,
            cluster_tol: 1e-6,
            degeneracy_ratio: 1e6,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let tols = [
            self.als_rel_tol,
            self.polish_tol,
            self.success_residual,
            self.cluster_tol,
            self.degeneracy_ratio,
        ];
        if tols.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::structural("solver tolerances must be positive"));
        }
        if self.success_residual < self.polish_tol {
            return Err(Error::structural("success_residual must be >= polish_tol"));
        }
        Ok(())
    }
}

/// Factor matrices `A (n1 x k)`, `B (n2 x k)`, `C (n3 x k)`.
#[derive(Debug, Clone)]
struct Factors {
    m: [CMatrix; 3],
}

impl Factors {
    fn from_decomposition(d: &Decomposition) -> Self {
        let cols = |f: fn(&SimpleTensor) -> &Vec<C64>, n: usize| {
            CMatrix::from_fn(n, d.rank(), |i, r| f(&d.terms[r])[i])
        };
        Factors {
            m: [
                cols(|t| &t.a, d.shape.n1),
                cols(|t| &t.b, d.shape.n2),
                cols(|t| &t.c, d.shape.n3),
            ],
        }
    }

    fn to_decomposition(&self, shape: Shape3) -> Decomposition {
        let k = self.m[0].ncols();
        let terms = (0..k)
            .map(|r| SimpleTensor {
                a: self.m[0].column(r).iter().copied().collect(),
                b: self.m[1].column(r).iter().copied().collect(),
                c: self.m[2].column(r).iter().copied().collect(),
            })
            .collect();
        Decomposition { shape, terms }
    }

    fn rank(&self) -> usize {
        self.m[0].ncols()
    }

    fn is_finite(&self) -> bool {
        self.m
            .iter()
            .flat_map(|m| m.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Equalize the three factor norms of every term.
    fn rebalance(&mut self) {
        for r in 0..self.rank() {
            let norms: Vec<f64> = self.m.iter().map(|m| m.column(r).norm()).collect();
            if norms.iter().any(|&n| n == 0.0 || !n.is_finite()) {
                continue;
            }
            let target = norms.iter().product::<f64>().cbrt();
            for (m, n) in self.m.iter_mut().zip(&norms) {
                m.column_mut(r).scale_mut(target / n);
            }
        }
    }

    fn max_term_magnitude(&self) -> f64 {
        (0..self.rank())
            .map(|r| self.m.iter().map(|m| m.column(r).norm()).product::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Column-wise Kronecker product, `x` slow.
fn khatri_rao(x: &CMatrix, y: &CMatrix) -> CMatrix {
    let (p, q) = (x.nrows(), y.nrows());
    CMatrix::from_fn(p * q, x.ncols(), |row, r| x[(row / q, r)] * y[(row % q, r)])
}

/// The three unfoldings of the target tensor.
struct Target {
    shape: Shape3,
    unfold: [CMatrix; 3],
    norm: f64,
}

impl Target {
    fn new(t: &Tensor3) -> Self {
        Target {
            shape: t.shape,
            unfold: [1, 2, 3].map(|m| flatten(t, m).expect("valid mode")),
            norm: t.norm(),
        }
    }

    /// The other two factors of mode `m` in unfolding order.
    fn others(m: usize) -> (usize, usize) {
        match m {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        }
    }

    /// Residual `model - T` unfolded along mode `m`.
    fn residual(&self, f: &Factors, m: usize) -> CMatrix {
        let (x, y) = Self::others(m);
        &f.m[m] * khatri_rao(&f.m[x], &f.m[y]).transpose() - &self.unfold[m]
    }

    fn objective(&self, f: &Factors) -> f64 {
        self.residual(f, 2).norm_squared()
    }
}

/// Factorization of a Hermitian positive semidefinite matrix, with a tiny
/// diagonal shift when Cholesky breaks down.
enum HermitianSolver {
    Cholesky(Cholesky<C64, nalgebra::Dyn>),
    Lu(nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl HermitianSolver {
    fn new(h: CMatrix) -> Self {
        if let Some(ch) = Cholesky::new(h.clone()) {
            return HermitianSolver::Cholesky(ch);
        }
        let scale = h
            .diagonal()
            .iter()
            .map(|z| z.re)
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut reg = h;
        for i in 0..reg.nrows() {
            reg[(i, i)] += C64::new(1e-12 * scale, 0.0);
        }
        match Cholesky::new(reg.clone()) {
            Some(ch) => HermitianSolver::Cholesky(ch),
            None => HermitianSolver::Lu(reg.lu()),
        }
    }

    fn solve(&self, rhs: &CMatrix) -> CMatrix {
        match self {
            HermitianSolver::Cholesky(ch) => ch.solve(rhs),
            HermitianSolver::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| rhs.clone()),
        }
    }
}

fn solve_hermitian(h: CMatrix, rhs: CMatrix) -> CMatrix {
    HermitianSolver::new(h).solve(&rhs)
}

fn als_sweep(target: &Target, f: &mut Factors) {
    for m in 0..3 {
        let (x, y) = Target::others(m);
        let kr = khatri_rao(&f.m[x], &f.m[y]);
        let mttkrp = &target.unfold[m] * kr.map(|z| z.conj());
        let gram = (f.m[x].adjoint() * &f.m[x]).component_mul(&(f.m[y].adjoint() * &f.m[y]));
        f.m[m] = solve_hermitian(gram, mttkrp.transpose()).transpose();
    }
}

/// Objective values `|T - model|^2` after each ALS sweep.
pub fn als_objective_trace(t: &Tensor3, start: &Decomposition, sweeps: usize) -> Result<Vec<f64>> {
    check_start(t, start)?;
    let target = Target::new(t);
    let mut f = Factors::from_decomposition(start);
    let mut trace = vec![target.objective(&f)];
    for _ in 0..sweeps {
        als_sweep(&target, &mut f);
        f.rebalance();
        trace.push(target.objective(&f));
    }
    Ok(trace)
}

fn als(target: &Target, f: &mut Factors, cfg: &SolverConfig) -> usize {
    let tn2 = target.norm * target.norm;
    let mut prev = target.objective(f);
    for it in 0..cfg.als_max_iters {
        als_sweep(target, f);
        f.rebalance();
        let obj = target.objective(f);
        if !obj.is_finite() {
            return it + 1;
        }
        debug_assert!(
            obj <= prev * (1.0 + 1e-6) + 1e-24 * tn2,
            "ALS objective increased: {prev} -> {obj}"
        );
        if obj.sqrt() < cfg.polish_tol * target.norm
            || prev - obj < cfg.als_rel_tol * prev
            || f.max_term_magnitude() > cfg.degeneracy_ratio * 1e2 * target.norm
        {
            return it + 1;
        }
        prev = obj;
    }
    cfg.als_max_iters
}

/// Parameter offset of factor `m` of term `r`.
fn param_offset(dims: &[usize; 3], r: usize, m: usize) -> usize {
    let per_term: usize = dims.iter().sum();
    r * per_term + dims[..m].iter().sum::<usize>()
}

/// `J^H J` and `J^H res` of the residual `model - T`.
fn normal_equations(target: &Target, f: &Factors) -> (CMatrix, CMatrix, f64) {
    let dims = target.shape.dims();
    let k = f.rank();
    let n: usize = k * dims.iter().sum::<usize>();
    let grams: Vec<CMatrix> = f.m.iter().map(|m| m.adjoint() * m).collect();
    let mut h = CMatrix::zeros(n, n);
    for r in 0..k {
        for s in 0..k {
            for m in 0..3 {
                for m2 in 0..3 {
                    let row0 = param_offset(&dims, r, m);
                    let col0 = param_offset(&dims, s, m2);
                    if m == m2 {
                        let (x, y) = Target::others(m);
                        let v = grams[x][(r, s)] * grams[y][(r, s)];
                        for i in 0..dims[m] {
                            h[(row0 + i, col0 + i)] = v;
                        }
                    } else {
                        let o = 3 - m - m2;
                        let go = grams[o][(r, s)];
                        for i in 0..dims[m] {
                            let fs = f.m[m][(i, s)] * go;
                            for i2 in 0..dims[m2] {
                                h[(row0 + i, col0 + i2)] = fs * f.m[m2][(i2, r)].conj();
                            }
                        }
                    }
                }
            }
        }
    }
    let mut g = CMatrix::zeros(n, 1);
    let mut res_norm2 = 0.0;
    for m in 0..3 {
        let (x, y) = Target::others(m);
        let kr = khatri_rao(&f.m[x], &f.m[y]);
        let res = &f.m[m] * kr.transpose() - &target.unfold[m];
        if m == 0 {
            res_norm2 = res.norm_squared();
        }
        let grad = res * kr.map(|z| z.conj());
        for r in 0..k {
            let off = param_offset(&dims, r, m);
            for i in 0..dims[m] {
                g[(off + i, 0)] = grad[(i, r)];
            }
        }
    }
    (h, g, res_norm2)
}

fn apply_step(f: &Factors, dims: &[usize; 3], delta: &CMatrix) -> Factors {
    let mut out = f.clone();
    for r in 0..f.rank() {
        for m in 0..3 {
            let off = param_offset(dims, r, m);
            for i in 0..dims[m] {
                out.m[m][(i, r)] += delta[(off + i, 0)];
            }
        }
    }
    out
}

/// Largest `|2a| / |d|` for which the geodesic acceleration `a` is applied.
const GEODESIC_RATIO: f64 = 0.75;

/// Factors of a parameter step `d`.
fn step_factors(dims: &[usize; 3], k: usize, d: &CMatrix) -> Factors {
    let zero = Factors {
        m: [0, 1, 2].map(|m| CMatrix::zeros(dims[m], k)),
    };
    apply_step(&zero, dims, d)
}

/// `J^H r''`, with `r''` the second derivative of the residual along `d`.
fn jh_second_derivative(f: &Factors, dims: &[usize; 3], d: &CMatrix) -> CMatrix {
    let k = f.rank();
    let df = step_factors(dims, k, d);
    let mut out = CMatrix::zeros(d.nrows(), 1);
    let two = C64::new(2.0, 0.0);
    for m in 0..3 {
        let (x, y) = Target::others(m);
        // mode-m unfolding of 2 Σ (dA⊗dB⊗C + dA⊗B⊗dC + A⊗dB⊗dC)
        let unfold = |p: [&CMatrix; 3]| &*p[m] * khatri_rao(p[x], p[y]).transpose();
        let r2 = (unfold([&df.m[0], &df.m[1], &f.m[2]])
            + unfold([&df.m[0], &f.m[1], &df.m[2]])
            + unfold([&f.m[0], &df.m[1], &df.m[2]]))
            * two;
        let grad = r2 * khatri_rao(&f.m[x], &f.m[y]).map(|z| z.conj());
        for r in 0..k {
            let off = param_offset(dims, r, m);
            for i in 0..dims[m] {
                out[(off + i, 0)] = grad[(i, r)];
            }
        }
    }
    out
}

const POLISH_STALL_ITERS: usize = 20;

/// Levenberg–Marquardt on the complex residual. Returns the iteration count.
fn polish(target: &Target, f: &mut Factors, cfg: &SolverConfig) -> usize {
    let dims = target.shape.dims();
    let goal = (cfg.polish_tol * target.norm).powi(2);
    let stall_floor = (cfg.success_residual * target.norm).powi(2);
    let mut mu: Option<f64> = None;
    let mut nu = 2.0;
    let mut slow = 0;
    let mut last = f64::INFINITY;
    for it in 0..cfg.polish_max_iters {
        let (h, g, obj) = normal_equations(target, f);
        if obj <= goal || !obj.is_finite() {
            return it;
        }
        // stuck at a nonzero local minimum
        if obj > 0.99 * last && obj > stall_floor {
            slow += 1;
            if slow >= POLISH_STALL_ITERS {
                return it;
            }
        } else {
            slow = 0;
        }
        last = obj;
        let hmax = h.diagonal().iter().map(|z| z.re).fold(0.0, f64::max);
        let mut damping = mu.unwrap_or(1e-3 * hmax);
        let mut accepted = false;
        for _ in 0..30 {
            let mut damped = h.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += C64::new(damping, 0.0);
            }
            let solver = HermitianSolver::new(damped);
            let delta = solver.solve(&-&g);
            // predicted decrease |r|^2 - |r + J d|^2 = -2 Re(d^H g) - d^H H d
            let dg = delta.dotc(&g).re;
            let dhd = delta.dotc(&(&h * &delta)).re;
            let predicted = -2.0 * dg - dhd;
            // second-order correction along the curved residual path
            let accel = solver.solve(&-jh_second_derivative(f, &dims, &delta));
            let step = if 2.0 * accel.norm() <= GEODESIC_RATIO * delta.norm() {
                &delta + accel * C64::new(0.5, 0.0)
            } else {
                delta
            };
            let trial = apply_step(f, &dims, &step);
            let trial_obj = target.objective(&trial);
            let rho = (obj - trial_obj) / predicted;
            if trial_obj.is_finite() && predicted > 0.0 && rho > 0.0 {
                *f = trial;
                damping *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                damping = damping.max(1e-15 * hmax);
                nu = 2.0;
                accepted = true;
                break;
            }
            damping *= nu;
            nu *= 2.0;
        }
        mu = Some(damping);
        if !accepted {
            return it + 1;
        }
        f.rebalance();
    }
    cfg.polish_max_iters
}

/// A converged run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solved {
    pub decomposition: Decomposition,
    /// `|T - assemble(d)| / |T|`.
    pub residual: f64,
    pub als_iters: usize,
    pub polish_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunFailure {
    NotConverged {
        residual: f64,
    },
    /// Diverging terms cancelling each other (border-rank behaviour).
    Degenerate {
        ratio: f64,
    },
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Converged(Solved),
    Failed(RunFailure),
}

fn check_start(t: &Tensor3, start: &Decomposition) -> Result<()> {
    if start.shape != t.shape {
        return Err(Error::structural(
            "start decomposition shape differs from tensor",
        ));
    }
    Ok(())
}

/// One ALS + polish run from `start`, with `k = start.rank()`.
pub fn decompose_once(
    t: &Tensor3,
    start: &Decomposition,
    cfg: &SolverConfig,
) -> Result<RunOutcome> {
    check_start(t, start)?;
    if t.norm() == 0.0 {
        return Err(Error::structural("cannot decompose the zero tensor"));
    }
    let target = Target::new(t);
    let mut f = Factors::from_decomposition(start);
    f.rebalance();
    Ok(run(&target, f, cfg))
}

fn run(target: &Target, mut f: Factors, cfg: &SolverConfig) -> RunOutcome {
    let als_iters = als(target, &mut f, cfg);
    if !f.is_finite() {
        return RunOutcome::Failed(RunFailure::NonFinite);
    }
    let ratio = f.max_term_magnitude() / target.norm;
    if ratio > cfg.degeneracy_ratio {
        return RunOutcome::Failed(RunFailure::Degenerate { ratio });
    }
    let polish_iters = polish(target, &mut f, cfg);
    if !f.is_finite() {
        return RunOutcome::Failed(RunFailure::NonFinite);
    }
    let residual = target.objective(&f).sqrt() / target.norm;
    let ratio = f.max_term_magnitude() / target.norm;
    if ratio > cfg.degeneracy_ratio {
        return RunOutcome::Failed(RunFailure::Degenerate { ratio });
    }
    if !(residual < cfg.success_residual) {
        return RunOutcome::Failed(RunFailure::NotConverged { residual });
    }
    RunOutcome::Converged(Solved {
        decomposition: f.to_decomposition(target.shape),
        residual,
        als_iters,
        polish_iters,
    })
}

/// Canonical form: every factor has unit norm times `σ^(1/3)` where `σ` is the
/// term magnitude; `a` and `b` have positive-real leading coordinate and `c`
/// carries the term's phase. Terms are sorted by the coordinates of `a`, then `b`.
pub fn canonicalize(d: &Decomposition) -> Decomposition {
    let mut terms: Vec<SimpleTensor> = d
        .terms
        .iter()
        .map(|t| {
            let sigma = t.magnitude();
            let root = sigma.cbrt();
            let a = ProjectivePoint::new(&t.a).expect("nonzero factor");
            let b = ProjectivePoint::new(&t.b).expect("nonzero factor");
            // a ⊗ b ⊗ c = (â ⊗ b̂) ⊗ c · <â,a><b̂,b>
            let phase = linalg::hdot(a.rep(), &t.a) * linalg::hdot(b.rep(), &t.b);
            let cn = linalg::norm(&t.c);
            let scale = phase / phase.norm() * (root / cn);
            SimpleTensor {
                a: a.rep().iter().map(|z| z * root).collect(),
                b: b.rep().iter().map(|z| z * root).collect(),
                c: t.c.iter().map(|z| z * scale).collect(),
            }
        })
        .collect();
    terms.sort_by(|x, y| term_key(x).partial_cmp(&term_key(y)).expect("finite"));
    Decomposition {
        shape: d.shape,
        terms,
    }
}

fn term_key(t: &SimpleTensor) -> Vec<f64> {
    t.a.iter().chain(&t.b).flat_map(|z| [z.re, z.im]).collect()
}

fn decomposition_key(d: &Decomposition) -> Vec<f64> {
    d.terms.iter().flat_map(term_key).collect()
}

/// Optimal term matching between two decompositions by chordal distance in
/// `P^N`: returns `assignment[i] = j` and the largest matched distance.
pub fn match_terms(d1: &Decomposition, d2: &Decomposition) -> Result<(Vec<usize>, f64)> {
    if d1.rank() != d2.rank() || d1.shape != d2.shape {
        return Err(Error::structural(format!(
            "cannot match decompositions with {} and {} terms",
            d1.rank(),
            d2.rank()
        )));
    }
    let cost: Vec<Vec<f64>> = d1
        .terms
        .iter()
        .map(|x| {
            d2.terms
                .iter()
                .map(|y| simple_tensor_distance(x, y))
                .collect()
        })
        .collect();
    let assignment = hungarian(&cost);
    let worst = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i][j])
        .fold(0.0, f64::max);
    Ok((assignment, worst))
}

/// Same rank-one terms up to order and scaling.
pub fn equivalent(d1: &Decomposition, d2: &Decomposition, tol: f64) -> Result<bool> {
    Ok(match_terms(d1, d2)?.1 < tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionClass {
    pub representative: Decomposition,
    /// Number of starts that converged into this class.
    pub members_found: usize,
    pub best_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureCounts {
    pub not_converged: usize,
    pub degenerate: usize,
    pub non_finite: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub schema_version: u32,
    pub tensor_id: String,
    pub shape: Shape3,
    pub k: usize,
    pub classes: Vec<DecompositionClass>,
    pub starts_used: usize,
    pub successes: usize,
    pub failures: FailureCounts,
    pub distinct_count: usize,
    /// Fewest starts reaching any class; `0` when there are no classes.
    pub min_basins: usize,
    pub config: SolverConfig,
}

/// Group converged runs into classes of equivalent decompositions. The runs
/// are sorted by canonical form first, so the result does not depend on
/// their order.
pub fn cluster(runs: &[Solved], tol: f64) -> Vec<DecompositionClass> {
    let mut canon: Vec<(Decomposition, f64)> = runs
        .iter()
        .map(|s| (canonicalize(&s.decomposition), s.residual))
        .collect();
    canon.sort_by(|x, y| {
        decomposition_key(&x.0)
            .partial_cmp(&decomposition_key(&y.0))
            .expect("finite")
            .then(x.1.partial_cmp(&y.1).expect("finite"))
    });
    let mut classes: Vec<DecompositionClass> = Vec::new();
    for (d, residual) in canon {
        let home = classes.iter_mut().find(|c| {
            match_terms(&c.representative, &d)
                .map(|(_, w)| w < tol)
                .unwrap_or(false)
        });
        match home {
            Some(c) => {
                c.members_found += 1;
                c.best_residual = c.best_residual.min(residual);
            }
            None => classes.push(DecompositionClass {
                representative: d,
                members_found: 1,
                best_residual: residual,
            }),
        }
    }
    classes.sort_by(|x, y| {
        y.members_found.cmp(&x.members_found).then(
            decomposition_key(&x.representative)
                .partial_cmp(&decomposition_key(&y.representative))
                .expect("finite"),
        )
    });
    classes
}

/// A start with i.i.d. standard complex Gaussian factors.
pub fn random_start(shape: Shape3, k: usize, seed: Seed) -> Decomposition {
    crate::multilinear::random_decomposition(shape, k, &mut seed.rng())
}

pub fn multistart_decompose(
    t: &Tensor3,
    k: usize,
    cfg: &SolverConfig,
) -> Result<MultiplicityReport> {
    multistart_decompose_with(t, k, cfg, &[])
}

/// As [`multistart_decompose`], with `extra_starts` run before the random ones.
pub fn multistart_decompose_with(
    t: &Tensor3,
    k: usize,
    cfg: &SolverConfig,
    extra_starts: &[Decomposition],
) -> Result<MultiplicityReport> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::structural("rank must be at least 1"));
    }
    if t.norm() == 0.0 {
        return Err(Error::structural("cannot decompose the zero tensor"));
    }
    for s in extra_starts {
        check_start(t, s)?;
        if s.rank() != k {
            return Err(Error::structural("extra start has the wrong rank"));
        }
    }
    let target = Target::new(t);
    let seed = Seed(cfg.seed).child("multistart");
    let total = extra_starts.len() + cfg.num_starts;
    let outcomes: Vec<RunOutcome> = (0..total)
        .into_par_iter()
        .map(|i| {
            let start = match extra_starts.get(i) {
                Some(s) => s.clone(),
                None => random_start(t.shape, k, seed.index((i - extra_starts.len()) as u64)),
            };
            let mut f = Factors::from_decomposition(&start);
            f.rebalance();
            run(&target, f, cfg)
        })
        .collect();

    let mut failures = FailureCounts::default();
    let mut solved = Vec::new();
    for o in outcomes {
        match o {
            RunOutcome::Converged(s) => solved.push(s),
            RunOutcome::Failed(RunFailure::NotConverged { .. }) => failures.not_converged += 1,
            RunOutcome::Failed(RunFailure::Degenerate { .. }) => failures.degenerate += 1,
            RunOutcome::Failed(RunFailure::NonFinite) => failures.non_finite += 1,
        }
    }
    let classes = cluster(&solved, cfg.cluster_tol);
    Ok(MultiplicityReport {
        schema_version: 1,
        tensor_id: crate::multilinear::fingerprint(t),
        shape: t.shape,
        k,
        distinct_count: classes.len(),
        min_basins: classes.iter().map(|c| c.members_found).min().unwrap_or(0),
        classes,
        starts_used: total,
        successes: solved.len(),
        failures,
        config: cfg.clone(),
    })
}

/// `|T - assemble(d)| / |T|`.
pub fn relative_residual(t: &Tensor3, d: &Decomposition) -> Result<f64> {
    let m = assemble(d)?;
    if m.shape != t.shape {
        return Err(Error::structural("shape mismatch"));
    }
    let diff: Vec<C64> = m.data.iter().zip(&t.data).map(|(x, y)| x - y).collect();
    Ok(linalg::norm(&diff) / t.norm())
}
