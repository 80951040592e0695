//! Secant varieties of Segre and Segre–Veronese varieties.
//!
//! Dimensions are computed with Terracini's lemma: the tangent space of the
//! `k`-th secant variety at a general point of the span of `x_1..x_k` is the
//! span of the tangent spaces at the `x_i`, so the affine dimension of the
//! secant cone is the rank of the `k` stacked Jacobians of the parametrization
//! at random parameter points.

use crate::cjson;
use crate::error::{Error, Result};
use crate::linalg::{self, hstack, CMatrix, CVector, RankReport, C64};
use crate::multilinear::Shape3;
use crate::seed::Seed;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A point of `C^n1 x C^n2 x C^n3`, one vector per factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    #[serde(with = "cjson::vec_list")]
    pub blocks: Vec<Vec<C64>>,
}

impl ParamPoint {
    pub fn new(x: Vec<C64>, y: Vec<C64>, z: Vec<C64>) -> Self {
        ParamPoint {
            blocks: vec![x, y, z],
        }
    }

    pub fn random<R: Rng + ?Sized>(dims: [usize; 3], rng: &mut R) -> Self {
        ParamPoint {
            blocks: dims
                .iter()
                .map(|&n| linalg::random_vector(n, rng))
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<C64> {
        self.blocks.concat()
    }

    pub fn from_flat(v: &[C64], dims: [usize; 3]) -> Self {
        let (x, rest) = v.split_at(dims[0]);
        let (y, z) = rest.split_at(dims[1]);
        ParamPoint::new(x.to_vec(), y.to_vec(), z.to_vec())
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    pub fn has_zero_block(&self) -> bool {
        self.blocks.iter().any(|b| linalg::norm(b) == 0.0)
    }
}

/// A multihomogeneous polynomial map from `C^n1 x C^n2 x C^n3` to an
/// ambient `C^M`. Its image is the affine cone over a projective variety.
pub trait Parametrization: Sync {
    fn describe(&self) -> String;
    fn ambient_dim(&self) -> usize;
    fn block_dims(&self) -> [usize; 3];
    fn degrees(&self) -> [usize; 3];
    fn evaluate(&self, u: &ParamPoint) -> CVector;
    /// `ambient_dim x param_dim` holomorphic Jacobian, columns ordered block by block.
    fn jacobian(&self, u: &ParamPoint) -> CMatrix;

    fn param_dim(&self) -> usize {
        self.block_dims().iter().sum()
    }

    /// Dimension of the affine cone over the image, for an embedding.
    fn cone_dim(&self) -> usize {
        self.param_dim() - 2
    }

    fn random_point(&self, rng: &mut dyn rand::RngCore) -> ParamPoint {
        ParamPoint::random(self.block_dims(), rng)
    }
}

/// All monomials of a fixed degree in `nvars` variables, in lexicographic
/// order (`x0^d` first, `x_{n-1}^d` last).
#[derive(Debug, Clone)]
pub struct Monomials {
    nvars: usize,
    exps: Vec<Vec<u32>>,
}

impl Monomials {
    pub fn new(nvars: usize, degree: usize) -> Self {
        fn rec(nvars: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if prefix.len() + 1 == nvars {
                prefix.push(left);
                out.push(prefix.clone());
                prefix.pop();
                return;
            }
            for e in (0..=left).rev() {
                prefix.push(e);
                rec(nvars, left - e, prefix, out);
                prefix.pop();
            }
        }
        let mut exps = Vec::new();
        rec(nvars, degree as u32, &mut Vec::new(), &mut exps);
        Monomials { nvars, exps }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exps
    }

    pub fn eval(&self, x: &[C64]) -> Vec<C64> {
        self.exps
            .iter()
            .map(|e| e.iter().zip(x).map(|(&p, xi)| xi.powu(p)).product())
            .collect()
    }

    /// Partial derivatives, `out[v][m] = d mono_m / d x_v`.
    pub fn derivatives(&self, x: &[C64]) -> Vec<Vec<C64>> {
        (0..self.nvars)
            .map(|v| {
                self.exps
                    .iter()
                    .map(|e| {
                        if e[v] == 0 {
                            return C64::new(0.0, 0.0);
                        }
                        let mut val = C64::new(e[v] as f64, 0.0);
                        for (w, (&p, xw)) in e.iter().zip(x).enumerate() {
                            let p = if w == v { p - 1 } else { p };
                            val *= xw.powu(p);
                        }
                        val
                    })
                    .collect()
            })
            .collect()
    }
}

/// Segre–Veronese embedding of `P^(n1-1) x P^(n2-1) x P^(n3-1)` by forms of
/// multidegree `(d1, d2, d3)` in the monomial basis. The ambient coordinate
/// is the Kronecker product of the three monomial vectors, first factor
/// slowest. Degrees `(1,1,1)` give the Segre embedding.
#[derive(Debug, Clone)]
pub struct SegreVeronese {
    dims: [usize; 3],
    degrees: [usize; 3],
    monos: [Monomials; 3],
}

impl SegreVeronese {
    pub fn new(dims: [usize; 3], degrees: [usize; 3]) -> Result<Self> {
        if dims.iter().any(|&n| n < 2) || degrees.iter().any(|&d| d < 1) {
            return Err(Error::structural(format!(
                "Segre-Veronese needs dims >= 2 and degrees >= 1, got {dims:?} {degrees:?}"
            )));
        }
        let monos = [0, 1, 2].map(|i| Monomials::new(dims[i], degrees[i]));
        Ok(SegreVeronese {
            dims,
            degrees,
            monos,
        })
    }

    pub fn segre(shape: Shape3) -> Self {
        SegreVeronese::new(shape.dims(), [1, 1, 1]).expect("Shape3 is validated")
    }

    /// The fourfold `P^2 x P^1 x P^1` embedded by `(3,1,1)` into `C^40`.
    pub fn model_311() -> Self {
        SegreVeronese::new([3, 2, 2], [3, 1, 1]).expect("valid constants")
    }

    pub fn is_segre(&self) -> bool {
        self.degrees == [1, 1, 1]
    }
}

impl Parametrization for SegreVeronese {
    fn describe(&self) -> String {
        if self.is_segre() {
            format!("Segre{:?}", self.dims)
        } else {
            format!("SegreVeronese{:?} degrees {:?}", self.dims, self.degrees)
        }
    }

    fn ambient_dim(&self) -> usize {
        self.monos.iter().map(Monomials::len).product()
    }

    fn block_dims(&self) -> [usize; 3] {
        self.dims
    }

    fn degrees(&self) -> [usize; 3] {
        self.degrees
    }

    fn evaluate(&self, u: &ParamPoint) -> CVector {
        let m: Vec<Vec<C64>> = (0..3).map(|i| self.monos[i].eval(&u.blocks[i])).collect();
        CVector::from_vec(linalg::kron(&linalg::kron(&m[0], &m[1]), &m[2]))
    }

    fn jacobian(&self, u: &ParamPoint) -> CMatrix {
        let m: Vec<Vec<C64>> = (0..3).map(|i| self.monos[i].eval(&u.blocks[i])).collect();
        let mut cols = Vec::with_capacity(self.param_dim());
        for block in 0..3 {
            for d in self.monos[block].derivatives(&u.blocks[block]) {
                let f: Vec<&[C64]> = (0..3)
                    .map(|i| {
                        if i == block {
                            d.as_slice()
                        } else {
                            m[i].as_slice()
                        }
                    })
                    .collect();
                cols.push(CVector::from_vec(linalg::kron(
                    &linalg::kron(f[0], f[1]),
                    f[2],
                )));
            }
        }
        CMatrix::from_columns(&cols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecantDimension {
    pub parametrization: String,
    pub k: usize,
    pub ambient_dim: usize,
    pub affine_dim: usize,
    pub projective_dim: i64,
    pub expected_projective_dim: i64,
    pub defect: i64,
    /// Singular-value gap at the rank threshold; `None` when the stacked
    /// Jacobian has full column or row rank with nothing dropped.
    pub gap_ratio: Option<f64>,
    pub seed: u64,
}

/// Stack the Jacobians at the given points and report the rank.
pub fn tangent_span_rank<P: Parametrization + ?Sized>(
    param: &P,
    points: &[ParamPoint],
    rel_tol: f64,
) -> RankReport {
    let blocks: Vec<CMatrix> = points.par_iter().map(|u| param.jacobian(u)).collect();
    linalg::rank_report(&hstack(&blocks), rel_tol)
}

fn sample_points<P: Parametrization + ?Sized>(param: &P, k: usize, seed: Seed) -> Vec<ParamPoint> {
    let mut rng = seed.rng();
    (0..k).map(|_| param.random_point(&mut rng)).collect()
}

/// Affine dimension of the `k`-th secant cone by Terracini's lemma, checked
/// on two independent samples.
pub fn terracini_dimension<P: Parametrization + ?Sized>(
    param: &P,
    k: usize,
    seed: Seed,
    rel_tol: f64,
) -> Result<SecantDimension> {
    if k == 0 {
        return Err(Error::structural("secant query needs k >= 1"));
    }
    let first = tangent_span_rank(
        param,
        &sample_points(param, k, seed.child("terracini-a")),
        rel_tol,
    );
    let second = tangent_span_rank(
        param,
        &sample_points(param, k, seed.child("terracini-b")),
        rel_tol,
    );
    if first.rank != second.rank {
        return Err(Error::Genericity {
            what: format!("Terracini rank of {} at k={k}", param.describe()),
            first: first.rank,
            second: second.rank,
        });
    }
    let ambient = param.ambient_dim() as i64;
    let expected = (ambient - 1).min((k * param.cone_dim()) as i64 - 1);
    let projective = first.rank as i64 - 1;
    let gap_ratio = match (first.gap_ratio, second.gap_ratio) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    Ok(SecantDimension {
        parametrization: param.describe(),
        k,
        ambient_dim: param.ambient_dim(),
        affine_dim: first.rank,
        projective_dim: projective,
        expected_projective_dim: expected,
        defect: expected - projective,
        gap_ratio,
        seed: seed.0,
    })
}

/// `min(N, k * dim X + k - 1)` for the Segre variety of `shape`.
pub fn expected_secant_dimension(shape: Shape3, k: usize) -> usize {
    shape
        .ambient_projective_dim()
        .min(k * shape.segre_dim() + k - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericRank {
    pub shape: [usize; 3],
    pub rank: usize,
    /// Smallest `k` whose expected secant dimension fills the ambient space.
    pub expected_rank: usize,
    /// Every Terracini computation performed, in increasing `k`.
    pub trace: Vec<SecantDimension>,
    pub seed: u64,
}

impl GenericRank {
    pub fn defective_steps(&self) -> Vec<(usize, i64)> {
        self.trace
            .iter()
            .filter(|s| s.defect != 0)
            .map(|s| (s.k, s.defect))
            .collect()
    }

    pub fn matches_expected(&self) -> bool {
        self.rank == self.expected_rank
    }
}

/// Smallest `k` for which the Terracini rank equals `n1 n2 n3`. The search
/// starts at the first `k` whose expected dimension fills the ambient space,
/// since no smaller `k` can.
pub fn generic_rank(shape: Shape3, seed: Seed, rel_tol: f64) -> Result<GenericRank> {
    let param = SegreVeronese::segre(shape);
    let ambient = shape.len();
    let expected_rank = (1..)
        .find(|&k| expected_secant_dimension(shape, k) == shape.ambient_projective_dim())
        .expect("expected dimension eventually fills");
    let mut trace = Vec::new();
    let mut k = expected_rank;
    loop {
        let dim = terracini_dimension(
            &param,
            k,
            seed.child("generic-rank").index(k as u64),
            rel_tol,
        )?;
        let full = dim.affine_dim == ambient;
        trace.push(dim);
        if full {
            break;
        }
        k += 1;
    }
    Ok(GenericRank {
        shape: shape.dims(),
        rank: k,
        expected_rank,
        trace,
        seed: seed.0,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// Projective factor dimensions `(a1, a2, a3)`, ascending.
    pub a: [usize; 3],
    pub balanced: bool,
    /// `(a1+1)(a2+1) - (a1+a2)`: the shape is unbalanced iff `a3` reaches it.
    pub threshold: usize,
    /// `(a1+1)(a2+1) - (1+a1+a2)`.
    pub identifiability_bound: usize,
    pub k: Option<usize>,
    /// For unbalanced shapes: whether `k` is within the identifiability bound.
    pub identifiable: Option<bool>,
}

pub fn classify_balance(a: [usize; 3], k: Option<usize>) -> Result<BalanceReport> {
    if !(a[0] <= a[1] && a[1] <= a[2]) {
        return Err(Error::structural(format!(
            "factor dimensions must be sorted ascending, got {a:?}"
        )));
    }
    let prod = (a[0] + 1) * (a[1] + 1);
    let threshold = prod - (a[0] + a[1]);
    let bound = prod - (1 + a[0] + a[1]);
    let balanced = a[2] < threshold;
    Ok(BalanceReport {
        a,
        balanced,
        threshold,
        identifiability_bound: bound,
        k,
        identifiable: match (balanced, k) {
            (false, Some(k)) => Some(k <= bound),
            _ => None,
        },
    })
}
