//! Serde adapters for complex data: a scalar is `[re, im]`, a vector is a
//! list of scalars, a matrix is a list of rows.

use crate::linalg::{CMatrix, C64};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

fn to_pairs(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn from_pairs(p: Vec<[f64; 2]>) -> Vec<C64> {
    p.into_iter().map(|[re, im]| C64::new(re, im)).collect()
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        to_pairs(v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        if pairs.iter().flatten().any(|x| !x.is_finite()) {
            return Err(D::Error::custom("non-finite complex entry"));
        }
        Ok(from_pairs(pairs))
    }
}

pub mod vec_list {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Vec<C64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| to_pairs(x))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<C64>>, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        Ok(rows.into_iter().map(from_pairs).collect())
    }
}

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = m
            .row_iter()
            .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        let flat: Vec<C64> = rows.into_iter().flat_map(from_pairs).collect();
        Ok(CMatrix::from_row_slice(nrows, ncols, &flat))
    }
}
