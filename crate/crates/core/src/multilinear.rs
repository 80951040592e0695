//! Complex three-way tensors, simple tensors and decompositions.
//!
//! Storage is row-major: entry `(i, j, k)` of a tensor of shape
//! `(n1, n2, n3)` lives at `i * n2 * n3 + j * n3 + k`.

use crate::cjson;
use crate::error::{Error, Result};
use crate::linalg::{self, hdot, CMatrix, C64};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Dimensions `(n1, n2, n3)` of `C^n1 ⊗ C^n2 ⊗ C^n3`. In projective notation
/// the factors are `P^(n-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 3]", into = "[usize; 3]")]
pub struct Shape3 {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
}

impl Shape3 {
    pub fn new(n1: usize, n2: usize, n3: usize) -> Result<Self> {
        if n1 < 2 || n2 < 2 || n3 < 2 {
            return Err(Error::structural(format!(
                "every factor needs dimension >= 2, got ({n1},{n2},{n3})"
            )));
        }
        Ok(Shape3 { n1, n2, n3 })
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.n1, self.n2, self.n3]
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2 * self.n3
    }

    /// Projective notation `(a1, a2, a3) = (n1-1, n2-1, n3-1)`.
    pub fn projective(&self) -> [usize; 3] {
        [self.n1 - 1, self.n2 - 1, self.n3 - 1]
    }

    /// Dimension `N` of the ambient projective space.
    pub fn ambient_projective_dim(&self) -> usize {
        self.len() - 1
    }

    /// Dimension of the Segre variety of simple tensors.
    pub fn segre_dim(&self) -> usize {
        self.n1 + self.n2 + self.n3 - 3
    }

    pub(crate) fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i * self.n2 * self.n3 + j * self.n3 + k
    }
}

impl TryFrom<[usize; 3]> for Shape3 {
    type Error = Error;
    fn try_from(d: [usize; 3]) -> Result<Self> {
        Shape3::new(d[0], d[1], d[2])
    }
}

impl From<Shape3> for [usize; 3] {
    fn from(s: Shape3) -> Self {
        s.dims()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    pub shape: Shape3,
    #[serde(with = "cjson::vec")]
    pub data: Vec<C64>,
}

impl Tensor3 {
    pub fn new(shape: Shape3, data: Vec<C64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::structural(format!(
                "tensor data has {} entries, shape needs {}",
                data.len(),
                shape.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::structural("tensor has non-finite entries"));
        }
        Ok(Tensor3 { shape, data })
    }

    pub fn zeros(shape: Shape3) -> Self {
        Tensor3 {
            shape,
            data: vec![C64::new(0.0, 0.0); shape.len()],
        }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> C64 {
        self.data[self.shape.index(i, j, k)]
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.data)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Tensor3 = serde_json::from_str(s)?;
        Tensor3::new(t.shape, t.data)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// The rank-one tensor `a ⊗ b ⊗ c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleTensor {
    #[serde(with = "cjson::vec")]
    pub a: Vec<C64>,
    #[serde(with = "cjson::vec")]
    pub b: Vec<C64>,
    #[serde(with = "cjson::vec")]
    pub c: Vec<C64>,
}

impl SimpleTensor {
    pub fn new(a: Vec<C64>, b: Vec<C64>, c: Vec<C64>) -> Result<Self> {
        for (name, v) in [("a", &a), ("b", &b), ("c", &c)] {
            if v.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                return Err(Error::structural(format!("factor {name} is zero")));
            }
        }
        Ok(SimpleTensor { a, b, c })
    }

    pub fn fits(&self, shape: &Shape3) -> bool {
        self.a.len() == shape.n1 && self.b.len() == shape.n2 && self.c.len() == shape.n3
    }

    /// The flattened tensor `a ⊗ b ⊗ c` in row-major order.
    pub fn to_vec(&self) -> Vec<C64> {
        linalg::kron(&linalg::kron(&self.a, &self.b), &self.c)
    }

    pub fn scaled(&self, s: C64) -> SimpleTensor {
        SimpleTensor {
            a: self.a.iter().map(|z| z * s).collect(),
            b: self.b.clone(),
            c: self.c.clone(),
        }
    }

    pub fn magnitude(&self) -> f64 {
        linalg::norm(&self.a) * linalg::norm(&self.b) * linalg::norm(&self.c)
    }
}

/// An ordered list of `k` simple tensors of a common shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub shape: Shape3,
    pub terms: Vec<SimpleTensor>,
}

impl Decomposition {
    pub fn new(shape: Shape3, terms: Vec<SimpleTensor>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::structural("decomposition needs at least one term"));
        }
        if let Some(pos) = terms.iter().position(|t| !t.fits(&shape)) {
            return Err(Error::structural(format!(
                "term {pos} does not match shape {:?}",
                shape.dims()
            )));
        }
        Ok(Decomposition { shape, terms })
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: Decomposition = serde_json::from_str(s)?;
        Decomposition::new(d.shape, d.terms)
    }
}

/// Canonical representative of a point of projective space: unit norm and
/// first nonzero coordinate positive real.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectivePoint {
    #[serde(with = "cjson::vec")]
    rep: Vec<C64>,
}

/// Coordinates below this modulus (after normalization) count as zero when
/// picking the phase anchor.
const PHASE_ANCHOR_TOL: f64 = 1e-12;

impl ProjectivePoint {
    pub fn new(v: &[C64]) -> Result<Self> {
        let n = linalg::norm(v);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::structural(
                "projective point from zero or non-finite vector",
            ));
        }
        let mut rep: Vec<C64> = v.iter().map(|z| z / n).collect();
        if let Some(lead) = rep.iter().find(|z| z.norm() > PHASE_ANCHOR_TOL) {
            let phase = lead.conj() / lead.norm();
            rep.iter_mut().for_each(|z| *z *= phase);
        }
        Ok(ProjectivePoint { rep })
    }

    pub fn rep(&self) -> &[C64] {
        &self.rep
    }

    pub fn dim(&self) -> usize {
        self.rep.len()
    }
}

/// `sqrt(1 - |<p,q>|^2)`, evaluated as the norm of the component of `p`
/// orthogonal to `q` so that tiny distances keep full relative accuracy.
pub fn chordal_distance(p: &ProjectivePoint, q: &ProjectivePoint) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::structural(format!(
            "chordal distance between P^{} and P^{}",
            p.dim() as isize - 1,
            q.dim() as isize - 1
        )));
    }
    Ok(unit_chordal(p.rep(), q.rep()))
}

fn unit_chordal(p: &[C64], q: &[C64]) -> f64 {
    let overlap = hdot(q, p);
    let resid: f64 = p
        .iter()
        .zip(q)
        .map(|(pi, qi)| (pi - qi * overlap).norm_sqr())
        .sum();
    resid.sqrt().min(1.0)
}

/// Chordal distance between the projective classes of two nonzero vectors.
/// Returns 1 if either vector is zero.
pub fn chordal_distance_vec(x: &[C64], y: &[C64]) -> f64 {
    assert_eq!(x.len(), y.len(), "chordal_distance_vec: length mismatch");
    let (nx, ny) = (linalg::norm(x), linalg::norm(y));
    if nx == 0.0 || ny == 0.0 {
        return 1.0;
    }
    let xu: Vec<C64> = x.iter().map(|z| z / nx).collect();
    let yu: Vec<C64> = y.iter().map(|z| z / ny).collect();
    unit_chordal(&xu, &yu)
}

/// Chordal distance between two simple tensors as points of `P^N`, computed
/// factorwise: `1 - prod(1 - s_i^2)` with `s_i` the factor distances.
pub fn simple_tensor_distance(x: &SimpleTensor, y: &SimpleTensor) -> f64 {
    let s = [
        chordal_distance_vec(&x.a, &y.a),
        chordal_distance_vec(&x.b, &y.b),
        chordal_distance_vec(&x.c, &y.c),
    ];
    let log_cos2: f64 = s.iter().map(|si| (-si * si).ln_1p()).sum();
    (-log_cos2.exp_m1()).max(0.0).sqrt().min(1.0)
}

pub fn assemble(d: &Decomposition) -> Result<Tensor3> {
    let shape = d.shape;
    let mut out = Tensor3::zeros(shape);
    for (pos, t) in d.terms.iter().enumerate() {
        if !t.fits(&shape) {
            return Err(Error::structural(format!(
                "term {pos} does not match shape"
            )));
        }
        for i in 0..shape.n1 {
            for j in 0..shape.n2 {
                let ab = t.a[i] * t.b[j];
                let base = shape.index(i, j, 0);
                for k in 0..shape.n3 {
                    out.data[base + k] += ab * t.c[k];
                }
            }
        }
    }
    Ok(out)
}

/// Stable hex identifier of a tensor's shape and exact coefficients.
pub fn fingerprint(t: &Tensor3) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let dims = t.shape.dims().map(|d| d as u64);
    let words = dims
        .into_iter()
        .chain(t.data.iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]));
    for w in words {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    format!("{h:016x}")
}

/// Mode unfolding: an `n_mode x (product of the other two)` matrix whose
/// columns run over the remaining indices in lexicographic order.
pub fn flatten(t: &Tensor3, mode: usize) -> Result<CMatrix> {
    let [n1, n2, n3] = t.shape.dims();
    let m = match mode {
        1 => CMatrix::from_fn(n1, n2 * n3, |i, col| t.get(i, col / n3, col % n3)),
        2 => CMatrix::from_fn(n2, n1 * n3, |j, col| t.get(col / n3, j, col % n3)),
        3 => CMatrix::from_fn(n3, n1 * n2, |k, col| t.get(col / n2, col % n2, k)),
        _ => return Err(Error::structural(format!("invalid mode {mode}"))),
    };
    Ok(m)
}

/// Inverse of [`flatten`].
pub fn unflatten(m: &CMatrix, shape: Shape3, mode: usize) -> Result<Tensor3> {
    let [n1, n2, n3] = shape.dims();
    let expected = match mode {
        1 => (n1, n2 * n3),
        2 => (n2, n1 * n3),
        3 => (n3, n1 * n2),
        _ => return Err(Error::structural(format!("invalid mode {mode}"))),
    };
    if m.shape() != expected {
        return Err(Error::structural(format!(
            "unfolding has shape {:?}, expected {:?}",
            m.shape(),
            expected
        )));
    }
    let mut out = Tensor3::zeros(shape);
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..n3 {
                out.data[shape.index(i, j, k)] = match mode {
                    1 => m[(i, j * n3 + k)],
                    2 => m[(j, i * n3 + k)],
                    _ => m[(k, i * n2 + j)],
                };
            }
        }
    }
    Ok(out)
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &CMatrix, rel_tol: f64) -> usize {
    linalg::rank_report(m, rel_tol).rank
}

/// A random simple tensor with i.i.d. standard complex Gaussian factors.
pub fn sample_segre_point<R: Rng + ?Sized>(shape: Shape3, rng: &mut R) -> SimpleTensor {
    SimpleTensor {
        a: linalg::random_vector(shape.n1, rng),
        b: linalg::random_vector(shape.n2, rng),
        c: linalg::random_vector(shape.n3, rng),
    }
}

pub fn random_decomposition<R: Rng + ?Sized>(
    shape: Shape3,
    k: usize,
    rng: &mut R,
) -> Decomposition {
    Decomposition {
        shape,
        terms: (0..k).map(|_| sample_segre_point(shape, rng)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DEFAULT_RANK_TOL;
    use crate::seed::Seed;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn e(n: usize, i: usize) -> Vec<C64> {
        (0..n).map(|j| c(if i == j { 1.0 } else { 0.0 })).collect()
    }

    #[test]
    fn basis_tensor() {
        let shape = Shape3::new(2, 3, 4).unwrap();
        let d = Decomposition::new(
            shape,
            vec![SimpleTensor::new(e(2, 0), e(3, 0), e(4, 0)).unwrap()],
        )
        .unwrap();
        let t = assemble(&d).unwrap();
        assert_eq!(t.data[0], c(1.0));
        assert!(t.data[1..].iter().all(|z| *z == c(0.0)));
    }

    #[test]
    fn shape_mismatch_is_structural() {
        let shape = Shape3::new(2, 2, 2).unwrap();
        let bad = SimpleTensor::new(e(3, 0), e(2, 0), e(2, 0)).unwrap();
        assert!(Decomposition::new(shape, vec![bad.clone()]).is_err());
        let d = Decomposition {
            shape,
            terms: vec![bad],
        };
        assert!(matches!(assemble(&d), Err(Error::Structural(_))));
    }

    #[test]
    fn small_shapes_and_zero_factors_rejected() {
        assert!(Shape3::new(1, 3, 3).is_err());
        assert!(SimpleTensor::new(vec![c(0.0); 2], e(2, 0), e(2, 0)).is_err());
    }

    #[test]
    fn flattening_ranks_of_rank_eight() {
        let shape = Shape3::new(3, 6, 6).unwrap();
        let mut rng = Seed(1).rng();
        let d = random_decomposition(shape, 8, &mut rng);
        let t = assemble(&d).unwrap();
        let m1 = flatten(&t, 1).unwrap();
        assert_eq!(m1.shape(), (3, 36));
        assert_eq!(numerical_rank(&m1, DEFAULT_RANK_TOL), 3);
        assert_eq!(
            numerical_rank(&flatten(&t, 2).unwrap(), DEFAULT_RANK_TOL),
            6
        );
        assert_eq!(
            numerical_rank(&flatten(&t, 3).unwrap(), DEFAULT_RANK_TOL),
            6
        );
    }

    #[test]
    fn flatten_round_trip_and_rank_one() {
        let shape = Shape3::new(2, 3, 4).unwrap();
        let mut rng = Seed(2).rng();
        let d = random_decomposition(shape, 1, &mut rng);
        let t = assemble(&d).unwrap();
        for mode in 1..=3 {
            let m = flatten(&t, mode).unwrap();
            assert_eq!(numerical_rank(&m, DEFAULT_RANK_TOL), 1);
            assert_eq!(unflatten(&m, shape, mode).unwrap(), t);
        }
        assert!(flatten(&t, 4).is_err());
    }

    #[test]
    fn numerical_rank_basics() {
        assert_eq!(numerical_rank(&CMatrix::identity(5, 5), 1e-8), 5);
        let mut rng = Seed(9).rng();
        let u = linalg::random_matrix(5, 1, &mut rng);
        let v = linalg::random_matrix(1, 7, &mut rng);
        assert_eq!(numerical_rank(&(u * v), 1e-8), 1);
        assert_eq!(numerical_rank(&CMatrix::zeros(4, 4), 1e-8), 0);
    }

    #[test]
    fn chordal_basics() {
        let mut rng = Seed(11).rng();
        let v = linalg::random_vector(5, &mut rng);
        let p = ProjectivePoint::new(&v).unwrap();
        assert!(chordal_distance(&p, &p).unwrap() < 1e-15);
        let phase = C64::from_polar(1.0, 0.7);
        let pv: Vec<C64> = v.iter().map(|z| z * phase * 3.0).collect();
        let q = ProjectivePoint::new(&pv).unwrap();
        assert!(chordal_distance(&p, &q).unwrap() < 1e-15);
        for (x, y) in p.rep().iter().zip(q.rep()) {
            assert!((x - y).norm() < 1e-14);
        }
        let o1 = ProjectivePoint::new(&e(3, 0)).unwrap();
        let o2 = ProjectivePoint::new(&e(3, 2)).unwrap();
        assert!((chordal_distance(&o1, &o2).unwrap() - 1.0).abs() < 1e-15);
        let short = ProjectivePoint::new(&e(2, 0)).unwrap();
        assert!(chordal_distance(&o1, &short).is_err());
    }

    #[test]
    fn canonical_representative() {
        let v = vec![C64::new(0.0, 0.0), C64::new(0.0, 2.0), C64::new(1.0, 1.0)];
        let p = ProjectivePoint::new(&v).unwrap();
        assert!((linalg::norm(p.rep()) - 1.0).abs() < 1e-12);
        assert_eq!(p.rep()[0], c(0.0));
        assert!(p.rep()[1].im.abs() < 1e-15 && p.rep()[1].re > 0.0);
    }

    #[test]
    fn simple_tensor_distance_matches_full_vectors() {
        let shape = Shape3::new(3, 4, 2).unwrap();
        let mut rng = Seed(12).rng();
        let x = sample_segre_point(shape, &mut rng);
        let y = sample_segre_point(shape, &mut rng);
        let direct = chordal_distance_vec(&x.to_vec(), &y.to_vec());
        assert!((simple_tensor_distance(&x, &y) - direct).abs() < 1e-12);
        assert!(simple_tensor_distance(&x, &x) < 1e-14);
    }

    #[test]
    fn segre_samples_are_reproducible_and_independent() {
        let shape = Shape3::new(3, 6, 6).unwrap();
        let a = sample_segre_point(shape, &mut Seed(5).rng());
        let b = sample_segre_point(shape, &mut Seed(5).rng());
        assert_eq!(a, b);
        let other = sample_segre_point(shape, &mut Seed(6).rng());
        assert!(chordal_distance_vec(&a.to_vec(), &other.to_vec()) > 0.1);

        let mut rng = Seed(7).rng();
        let rows: Vec<Vec<C64>> = (0..8)
            .map(|_| sample_segre_point(shape, &mut rng).to_vec())
            .collect();
        let m = CMatrix::from_fn(8, 108, |r, col| rows[r][col]);
        assert_eq!(numerical_rank(&m, DEFAULT_RANK_TOL), 8);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let shape = Shape3::new(2, 3, 2).unwrap();
        let mut rng = Seed(13).rng();
        let d = random_decomposition(shape, 3, &mut rng);
        let back = Decomposition::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(back, d);
        let t = assemble(&d).unwrap();
        let json = t.to_json().unwrap();
        assert!(json.starts_with("{\"shape\":[2,3,2],\"data\":[["));
        assert_eq!(Tensor3::from_json(&json).unwrap(), t);
        assert!(Tensor3::from_json("{\"shape\":[2,2,2],\"data\":[[1.0,0.0]]}").is_err());
    }
}
