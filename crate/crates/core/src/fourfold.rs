//! The fourfold `Y ⊂ P^2 x P^5 x P^5` through eight general simple tensors.
//!
//! A Segre embedding `s: P^2 x P^1 -> P^5` is written `s(q, t) = S (t ⊗ q)`:
//! the coordinate `3 j + l` of `C^6` is identified with `t_j q_l`. Fitting
//! `S` so that the line `s({Q_i} x P^1)` passes through `P_i` is linear in
//! `M = S^-1`: the condition is `M P_i ∈ C^2 ⊗ Q_i`, four independent linear
//! equations per pair. With eight pairs the 32 x 36 system has a four
//! dimensional solution space (the `GL_2` acting on `P^1`).
//!
//! Given eight simple tensors `a_i ⊗ b_i ⊗ c_i`, fitting `(a_i, b_i)` and
//! `(a_i, c_i)` gives `S` and `S'`, and
//! `ζ(q, t, t') = q ⊗ S (t ⊗ q) ⊗ S' (t' ⊗ q)` parametrizes a fourfold of
//! multidegree `(3,1,1)` through all eight points, spanning a `P^39`.

use crate::cjson;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, RankReport, C64, DEFAULT_RANK_TOL};
use crate::multilinear::{chordal_distance_vec, SimpleTensor};
use crate::secant::{ParamPoint, Parametrization};
use crate::seed::Seed;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Expected dimension of the fit's solution space.
pub const FIT_NULLSPACE_DIM: usize = 4;
/// Affine dimension of the span of `Y`.
pub const SPAN_DIM: usize = 40;
const MAX_INVERTIBLE_DRAWS: usize = 20;
const MAX_CONDITION: f64 = 1e8;
const ANCHOR_TOL: f64 = 1e-8;
const MIN_SEPARATION: f64 = 1e-6;
const SPAN_SAMPLES: usize = 80;

/// Coordinates of `s(q, t)` before applying `S`: index `3 j + l` holds `t_j q_l`.
pub fn segre_coords(q: &[C64], t: &[C64]) -> Vec<C64> {
    linalg::kron(t, q)
}

/// Point pairs `(P_i, Q_i) ∈ P^5 x P^2` for the Segre fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    #[serde(with = "cjson::vec_list")]
    pub p: Vec<Vec<C64>>,
    #[serde(with = "cjson::vec_list")]
    pub q: Vec<Vec<C64>>,
}

impl FitProblem {
    pub fn new(p: Vec<Vec<C64>>, q: Vec<Vec<C64>>) -> Result<Self> {
        if p.len() != q.len() || p.is_empty() {
            return Err(Error::structural(format!(
                "fit needs matching nonempty point lists, got {} and {}",
                p.len(),
                q.len()
            )));
        }
        if p.iter().any(|v| v.len() != 6) || q.iter().any(|v| v.len() != 3) {
            return Err(Error::structural("fit points must lie in C^6 and C^3"));
        }
        for pts in [&p, &q] {
            for i in 0..pts.len() {
                for j in 0..i {
                    if chordal_distance_vec(&pts[i], &pts[j]) <= MIN_SEPARATION {
                        return Err(Error::DegenerateInput(format!(
                            "points {j} and {i} coincide projectively"
                        )));
                    }
                }
            }
        }
        Ok(FitProblem { p, q })
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let p = (0..n).map(|_| linalg::random_vector(6, rng)).collect();
        let q = (0..n).map(|_| linalg::random_vector(3, rng)).collect();
        FitProblem { p, q }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    /// One row per linear condition on the 36 entries of `M` (row-major).
    fn system(&self) -> CMatrix {
        let mut rows: Vec<Vec<C64>> = Vec::with_capacity(4 * self.len());
        for (p, q) in self.p.iter().zip(&self.q) {
            // z^T q = 0 for z in the annihilator of q
            let qt = CMatrix::from_row_slice(1, 3, q);
            let (ann, _) = linalg::nullspace(&qt, DEFAULT_RANK_TOL);
            for j in 0..2 {
                for z in ann.column_iter() {
                    let mut w = [C64::new(0.0, 0.0); 6];
                    for l in 0..3 {
                        w[3 * j + l] = z[l];
                    }
                    let mut row = vec![C64::new(0.0, 0.0); 36];
                    for r in 0..6 {
                        for c in 0..6 {
                            row[r * 6 + c] = w[r] * p[c];
                        }
                    }
                    rows.push(row);
                }
            }
        }
        let flat: Vec<C64> = rows.concat();
        CMatrix::from_row_slice(rows.len(), 36, &flat)
    }
}

/// A Segre embedding `s(q, t) = S (t ⊗ q)` through the fit data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegreFit {
    #[serde(with = "cjson::matrix")]
    pub s: CMatrix,
    /// Recovered `P^1` coordinates with `S (t_i ⊗ Q_i) ∝ P_i`.
    #[serde(with = "cjson::vec_list")]
    pub t: Vec<Vec<C64>>,
    /// Chordal distances between `S (t_i ⊗ Q_i)` and `P_i`.
    pub residuals: Vec<f64>,
    pub nullspace_dim: usize,
    pub condition: f64,
}

impl SegreFit {
    pub fn apply(&self, q: &[C64], t: &[C64]) -> Vec<C64> {
        let v = CVector::from_vec(segre_coords(q, t));
        (&self.s * v).as_slice().to_vec()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

pub fn fit_segre_embedding<R: Rng + ?Sized>(fp: &FitProblem, rng: &mut R) -> Result<SegreFit> {
    let (null, _) = linalg::nullspace(&fp.system(), DEFAULT_RANK_TOL);
    if null.ncols() != FIT_NULLSPACE_DIM {
        return Err(Error::DegenerateInput(format!(
            "fit solution space has dimension {}, expected {FIT_NULLSPACE_DIM}",
            null.ncols()
        )));
    }
    let mut chosen = None;
    for _ in 0..MAX_INVERTIBLE_DRAWS {
        let coeffs = CVector::from_vec(linalg::random_vector(FIT_NULLSPACE_DIM, rng));
        let m_vec = &null * coeffs;
        let m = CMatrix::from_row_slice(6, 6, m_vec.as_slice());
        let cond = linalg::condition_number(&m);
        if cond < MAX_CONDITION {
            chosen = Some((m, cond));
            break;
        }
    }
    let (m, _) = chosen.ok_or(Error::NoInvertibleSolution(MAX_INVERTIBLE_DRAWS))?;
    let s = m
        .clone()
        .try_inverse()
        .ok_or(Error::NoInvertibleSolution(MAX_INVERTIBLE_DRAWS))?;

    let mut t = Vec::with_capacity(fp.len());
    let mut residuals = Vec::with_capacity(fp.len());
    for (p, q) in fp.p.iter().zip(&fp.q) {
        let v = &m * CVector::from_column_slice(p);
        let qq = linalg::hdot(q, q);
        let ti: Vec<C64> = (0..2)
            .map(|j| linalg::hdot(q, &v.as_slice()[3 * j..3 * j + 3]) / qq)
            .collect();
        let image = &s * CVector::from_vec(segre_coords(q, &ti));
        residuals.push(chordal_distance_vec(image.as_slice(), p));
        t.push(ti);
    }
    let fit = SegreFit {
        condition: linalg::condition_number(&s),
        s,
        t,
        residuals,
        nullspace_dim: null.ncols(),
    };
    if fit.max_residual() >= ANCHOR_TOL {
        return Err(Error::ConstructionInconsistency(format!(
            "fit residual {:.3e} exceeds {ANCHOR_TOL:e}",
            fit.max_residual()
        )));
    }
    Ok(fit)
}

/// The fourfold through eight anchors of `P^2 x P^5 x P^5`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fourfold {
    pub anchors: Vec<SimpleTensor>,
    pub fit_b: SegreFit,
    pub fit_c: SegreFit,
    /// `108 x 40`, orthonormal columns spanning the span of `Y`.
    pub span_basis: CMatrix,
    pub span_rank: RankReport,
    pub anchor_params: Vec<ParamPoint>,
}

impl Fourfold {
    /// The three factors of `ζ(u)` as a simple tensor.
    pub fn factors(&self, u: &ParamPoint) -> SimpleTensor {
        let [q, t, t2] = [&u.blocks[0], &u.blocks[1], &u.blocks[2]];
        SimpleTensor {
            a: q.clone(),
            b: self.fit_b.apply(q, t),
            c: self.fit_c.apply(q, t2),
        }
    }

    pub fn evaluate_ambient(&self, u: &ParamPoint) -> CVector {
        CVector::from_vec(self.factors(u).to_vec())
    }

    /// `108 x 7` Jacobian in ambient coordinates.
    pub fn jacobian_ambient(&self, u: &ParamPoint) -> CMatrix {
        let [q, t, t2] = [&u.blocks[0], &u.blocks[1], &u.blocks[2]];
        let f = self.factors(u);
        let (s, s2) = (&self.fit_b.s, &self.fit_c.s);
        let zero = C64::new(0.0, 0.0);
        // d/dq_l (S (t ⊗ q)) = sum_j t_j S[:, 3j+l]; d/dt_j = sum_l q_l S[:, 3j+l]
        let dq = |m: &CMatrix, tv: &[C64], l: usize| -> Vec<C64> {
            (0..6)
                .map(|r| (0..2).map(|j| tv[j] * m[(r, 3 * j + l)]).sum())
                .collect()
        };
        let dt = |m: &CMatrix, j: usize| -> Vec<C64> {
            (0..6)
                .map(|r| (0..3).map(|l| q[l] * m[(r, 3 * j + l)]).sum())
                .collect()
        };
        let k3 = |a: &[C64], b: &[C64], c: &[C64]| linalg::kron(&linalg::kron(a, b), c);
        let mut cols: Vec<CVector> = Vec::with_capacity(7);
        for l in 0..3 {
            let mut e = [zero; 3];
            e[l] = C64::new(1.0, 0.0);
            let col: Vec<C64> = k3(&e, &f.b, &f.c)
                .into_iter()
                .zip(k3(q, &dq(s, t, l), &f.c))
                .zip(k3(q, &f.b, &dq(s2, t2, l)))
                .map(|((x, y), z)| x + y + z)
                .collect();
            cols.push(CVector::from_vec(col));
        }
        for j in 0..2 {
            cols.push(CVector::from_vec(k3(q, &dt(s, j), &f.c)));
        }
        for j in 0..2 {
            cols.push(CVector::from_vec(k3(q, &f.b, &dt(s2, j))));
        }
        CMatrix::from_columns(&cols)
    }

    /// Coordinates of an ambient vector in the span basis.
    pub fn coords(&self, v: &CVector) -> CVector {
        self.span_basis.adjoint() * v
    }

    /// Relative norm of the component of `v` outside the span of `Y`.
    pub fn span_residual(&self, v: &CVector) -> f64 {
        let n = v.norm();
        if n == 0.0 {
            return 0.0;
        }
        (v - &self.span_basis * self.coords(v)).norm() / n
    }

    pub fn max_anchor_distance(&self) -> f64 {
        self.anchors
            .iter()
            .zip(&self.anchor_params)
            .map(|(x, u)| chordal_distance_vec(self.evaluate_ambient(u).as_slice(), &x.to_vec()))
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&FourfoldJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: FourfoldJson = serde_json::from_str(s)?;
        Fourfold::try_from(j)
    }
}

/// Parametrization of `Y` in the coordinates of its 40-dimensional span.
impl Parametrization for Fourfold {
    fn describe(&self) -> String {
        "Fourfold(3,1,1) in span coordinates".to_string()
    }

    fn ambient_dim(&self) -> usize {
        self.span_basis.ncols()
    }

    fn block_dims(&self) -> [usize; 3] {
        [3, 2, 2]
    }

    fn degrees(&self) -> [usize; 3] {
        [3, 1, 1]
    }

    fn evaluate(&self, u: &ParamPoint) -> CVector {
        self.coords(&self.evaluate_ambient(u))
    }

    fn jacobian(&self, u: &ParamPoint) -> CMatrix {
        self.span_basis.adjoint() * self.jacobian_ambient(u)
    }
}

fn check_params(u: &ParamPoint) -> Result<()> {
    if u.dims() != [3, 2, 2] {
        return Err(Error::structural(format!(
            "fourfold parameters need blocks (3,2,2), got {:?}",
            u.dims()
        )));
    }
    if u.has_zero_block() {
        return Err(Error::structural("fourfold parameter has a zero factor"));
    }
    Ok(())
}

/// `ζ(u)` in `C^108` together with its coordinates in the span basis.
pub fn evaluate_fourfold(y: &Fourfold, u: &ParamPoint) -> Result<(CVector, CVector)> {
    check_params(u)?;
    let v = y.evaluate_ambient(u);
    let c = y.coords(&v);
    Ok((v, c))
}

/// `40 x 7` Jacobian of `ζ` in span coordinates.
pub fn fourfold_jacobian(y: &Fourfold, u: &ParamPoint) -> Result<CMatrix> {
    check_params(u)?;
    Ok(y.jacobian(u))
}

/// Build `Y` through eight simple tensors of shape `(3, 6, 6)`.
pub fn build_fourfold(anchors: &[SimpleTensor], seed: Seed) -> Result<Fourfold> {
    if anchors.len() != 8 {
        return Err(Error::structural(format!(
            "fourfold needs 8 anchors, got {}",
            anchors.len()
        )));
    }
    if anchors
        .iter()
        .any(|x| x.a.len() != 3 || x.b.len() != 6 || x.c.len() != 6)
    {
        return Err(Error::structural("anchors must have shape (3,6,6)"));
    }
    let q: Vec<Vec<C64>> = anchors.iter().map(|x| x.a.clone()).collect();
    let fp_b = FitProblem::new(anchors.iter().map(|x| x.b.clone()).collect(), q.clone())?;
    let fp_c = FitProblem::new(anchors.iter().map(|x| x.c.clone()).collect(), q.clone())?;
    let fit_b = fit_segre_embedding(&fp_b, &mut seed.child("fit-b").rng())?;
    let fit_c = fit_segre_embedding(&fp_c, &mut seed.child("fit-c").rng())?;

    let anchor_params: Vec<ParamPoint> = (0..8)
        .map(|i| ParamPoint::new(q[i].clone(), fit_b.t[i].clone(), fit_c.t[i].clone()))
        .collect();

    let mut y = Fourfold {
        anchors: anchors.to_vec(),
        fit_b,
        fit_c,
        span_basis: CMatrix::zeros(108, 0),
        span_rank: RankReport {
            rank: 0,
            gap_ratio: None,
            sigma_max: 0.0,
        },
        anchor_params,
    };

    let mut rng = seed.child("span").rng();
    let images: Vec<CVector> = (0..SPAN_SAMPLES)
        .map(|_| {
            let v = y.evaluate_ambient(&ParamPoint::random([3, 2, 2], &mut rng));
            let n = v.norm();
            v / C64::new(n, 0.0)
        })
        .collect();
    let (basis, report) = linalg::column_space(&CMatrix::from_columns(&images), DEFAULT_RANK_TOL);
    if report.rank != SPAN_DIM {
        return Err(Error::ConstructionInconsistency(format!(
            "span of Y has affine dimension {}, expected {SPAN_DIM}",
            report.rank
        )));
    }
    y.span_basis = basis;
    y.span_rank = report;

    let worst = y.max_anchor_distance();
    if worst >= ANCHOR_TOL {
        return Err(Error::ConstructionInconsistency(format!(
            "anchor reproduced only to chordal distance {worst:.3e}"
        )));
    }
    Ok(y)
}

/// Wire format: `S` and `S'` as 6 x 6 row lists, the span basis as 40
/// rows of length 108.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourfoldJson {
    pub schema_version: u32,
    pub anchors: Vec<SimpleTensor>,
    pub fit_b: SegreFit,
    pub fit_c: SegreFit,
    #[serde(with = "cjson::matrix")]
    pub span_basis: CMatrix,
    pub span_rank: RankReport,
    pub anchor_params: Vec<ParamPoint>,
}

impl From<&Fourfold> for FourfoldJson {
    fn from(y: &Fourfold) -> Self {
        FourfoldJson {
            schema_version: 1,
            anchors: y.anchors.clone(),
            fit_b: y.fit_b.clone(),
            fit_c: y.fit_c.clone(),
            span_basis: y.span_basis.transpose(),
            span_rank: y.span_rank.clone(),
            anchor_params: y.anchor_params.clone(),
        }
    }
}

impl TryFrom<FourfoldJson> for Fourfold {
    type Error = Error;
    fn try_from(j: FourfoldJson) -> Result<Self> {
        if j.span_basis.ncols() != 108 || j.fit_b.s.shape() != (6, 6) || j.fit_c.s.shape() != (6, 6)
        {
            return Err(Error::structural("fourfold json has wrong matrix shapes"));
        }
        Ok(Fourfold {
            anchors: j.anchors,
            fit_b: j.fit_b,
            fit_c: j.fit_c,
            span_basis: j.span_basis.transpose(),
            span_rank: j.span_rank,
            anchor_params: j.anchor_params,
        })
    }
}

/// Eight random simple tensors of shape `(3, 6, 6)` and the fourfold through them.
pub fn random_fourfold(seed: Seed) -> Result<Fourfold> {
    let shape = crate::multilinear::Shape3::new(3, 6, 6)?;
    let mut rng = seed.child("anchors").rng();
    let anchors: Vec<SimpleTensor> = (0..8)
        .map(|_| crate::multilinear::sample_segre_point(shape, &mut rng))
        .collect();
    build_fourfold(&anchors, seed.child("fourfold"))
}
