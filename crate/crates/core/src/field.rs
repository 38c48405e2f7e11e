//! Scalar and vector samples on a periodic box.
//!
//! Storage is C order: the x index varies slowest and z fastest, so the flat
//! offset of `(i, j, k)` is `(i * ny + j) * nz + k`.

use std::ops::{Index, IndexMut};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: [usize; 3], value: f64) -> Self {
        Self {
            dims,
            data: vec![value; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(LabError::InvalidParameter(format!(
                "buffer of length {} cannot hold a {}x{}x{} field",
                data.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        Ok(Self { dims, data })
    }

    /// Samples `f(i, j, k)` at every node.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    pub fn ensure_dims(&self, dims: [usize; 3]) -> Result<()> {
        if self.dims != dims {
            return Err(LabError::ShapeMismatch {
                expected: dims,
                found: self.dims,
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two equally shaped fields.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.dims, other.dims);
        Self {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    /// `self += factor * other`
    pub fn axpy(&mut self, factor: f64, other: &Self) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Root-mean-square over all nodes.
    pub fn rms(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        (self.sum_squares() / self.data.len() as f64).sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<usize> for ScalarField {
    type Output = f64;

    fn index(&self, idx: usize) -> &f64 {
        &self.data[idx]
    }
}

impl IndexMut<usize> for ScalarField {
    fn index_mut(&mut self, idx: usize) -> &mut f64 {
        &mut self.data[idx]
    }
}

/// Three Cartesian components sampled on the same box.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub comps: [ScalarField; 3],
}

impl VectorField {
    pub fn new(x: ScalarField, y: ScalarField, z: ScalarField) -> Result<Self> {
        let dims = x.dims();
        y.ensure_dims(dims)?;
        z.ensure_dims(dims)?;
        Ok(Self { comps: [x, y, z] })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            comps: [
                ScalarField::zeros(dims),
                ScalarField::zeros(dims),
                ScalarField::zeros(dims),
            ],
        }
    }

    pub fn uniform(dims: [usize; 3], value: [f64; 3]) -> Self {
        Self {
            comps: [
                ScalarField::filled(dims, value[0]),
                ScalarField::filled(dims, value[1]),
                ScalarField::filled(dims, value[2]),
            ],
        }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(dims);
        let mut n = 0;
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let v = f(i, j, k);
                    for c in 0..3 {
                        out.comps[c][n] = v[c];
                    }
                    n += 1;
                }
            }
        }
        out
    }

    pub fn dims(&self) -> [usize; 3] {
        self.comps[0].dims()
    }

    pub fn ensure_dims(&self, dims: [usize; 3]) -> Result<()> {
        for c in &self.comps {
            c.ensure_dims(dims)?;
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [f64; 3] {
        [self.comps[0][idx], self.comps[1][idx], self.comps[2][idx]]
    }

    pub fn map_comps(&self, f: impl Fn(&ScalarField) -> ScalarField) -> Self {
        Self {
            comps: [f(&self.comps[0]), f(&self.comps[1]), f(&self.comps[2])],
        }
    }

    pub fn zip_comps(&self, other: &Self, f: impl Fn(&ScalarField, &ScalarField) -> ScalarField) -> Self {
        Self {
            comps: [
                f(&self.comps[0], &other.comps[0]),
                f(&self.comps[1], &other.comps[1]),
                f(&self.comps[2], &other.comps[2]),
            ],
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_comps(other, ScalarField::add)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_comps(other, ScalarField::sub)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map_comps(|c| c.scaled(factor))
    }

    pub fn axpy(&mut self, factor: f64, other: &Self) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            a.axpy(factor, b);
        }
    }

    pub fn dot(&self, other: &Self) -> ScalarField {
        let mut out = self.comps[0].mul(&other.comps[0]);
        for c in 1..3 {
            let prod = self.comps[c].mul(&other.comps[c]);
            out.axpy(1.0, &prod);
        }
        out
    }

    pub fn cross(&self, other: &Self) -> Self {
        let dims = self.dims();
        let mut out = Self::zeros(dims);
        for n in 0..self.comps[0].len() {
            let c = cross(self.at(n), other.at(n));
            for (comp, v) in out.comps.iter_mut().zip(c) {
                comp[n] = v;
            }
        }
        out
    }

    /// Multiplies every component by a scalar field.
    pub fn scale_by(&self, factor: &ScalarField) -> Self {
        self.map_comps(|c| c.mul(factor))
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.comps.iter().all(ScalarField::all_finite)
    }
}

#[inline]
pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
