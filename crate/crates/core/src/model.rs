//! Core value types: profiles, depth images, sample sets and measurements.
//!
//! Depth images are stored column-major so that the flat buffer *is* the
//! column-stacked vector `vec(Z)`: pixel `(i, j)` (zero-based) lives at
//! offset `j * rows + i`. Index sets handed in or out by users are
//! one-based; [`SampleSet::positions`] exposes the zero-based offsets used
//! internally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Domain of a profile: a 1D scan of `n` depths or an `rows x cols` image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Line(usize),
    Grid { rows: usize, cols: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Line(n) => n,
            Shape::Grid { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        match *self {
            Shape::Line(_) => None,
            Shape::Grid { rows, cols } => Some((rows, cols)),
        }
    }
}

/// A 1D depth profile (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct Profile1D<T> {
    values: Vec<T>,
}

impl<T: Scalar> Profile1D<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Parameter("profile must be nonempty".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite depth at index {}", k + 1)));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }
}

/// A depth image (meters), stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DepthImage<T> {
    /// Builds an image from a column-major buffer.
    pub fn from_column_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Parameter("image must have at least one row and column".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(rows * cols, data.len()));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite depth at pixel ({}, {})",
                k % rows + 1,
                k / rows + 1
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds an image from a list of rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::dim(c, bad.len()));
        }
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    /// Builds an image from a function of zero-based `(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self::from_column_major(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> Shape {
        Shape::Grid {
            rows: self.rows,
            cols: self.cols,
        }
    }

    /// Zero-based pixel access.
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[j * self.rows + i]
    }

    /// The column-major buffer, i.e. `vec(Z)`.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i)).collect()
    }
}

/// Anything that can be viewed as a vectorized profile.
pub trait AsProfile<T> {
    fn as_vector(&self) -> &[T];
    fn domain(&self) -> Shape;
}

impl<T: Scalar> AsProfile<T> for Profile1D<T> {
    fn as_vector(&self) -> &[T] {
        self.values()
    }
    fn domain(&self) -> Shape {
        Shape::Line(self.len())
    }
}

impl<T: Scalar> AsProfile<T> for DepthImage<T> {
    fn as_vector(&self) -> &[T] {
        self.as_slice()
    }
    fn domain(&self) -> Shape {
        self.shape()
    }
}

/// Column-wise stacking `z = vec(Z)`.
pub fn vectorize<T: Scalar>(image: &DepthImage<T>) -> Profile1D<T> {
    Profile1D {
        values: image.as_slice().to_vec(),
    }
}

/// Inverse of [`vectorize`].
pub fn devectorize<T: Scalar>(z: &[T], rows: usize, cols: usize) -> Result<DepthImage<T>> {
    if z.len() != rows * cols {
        return Err(Error::dim(rows * cols, z.len()));
    }
    DepthImage::from_column_major(rows, cols, z.to_vec())
}

/// Sorted, duplicate-free set of sampled locations over a [`Shape`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    shape: Shape,
    pos: Vec<usize>,
}

impl SampleSet {
    /// Builds a sample set from one-based indices into the (vectorized)
    /// profile. Input order is irrelevant; repeats collapse.
    pub fn from_indices(shape: Shape, one_based: impl IntoIterator<Item = usize>) -> Result<Self> {
        let n = shape.len();
        let mut pos = Vec::new();
        for k in one_based {
            if k == 0 || k > n {
                return Err(Error::Index { index: k, len: n });
            }
            pos.push(k - 1);
        }
        Self::from_positions(shape, pos)
    }

    /// Builds a sample set from one-based `(row, col)` pixel pairs.
    pub fn from_pixels(
        rows: usize,
        cols: usize,
        pixels: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let shape = Shape::Grid { rows, cols };
        let mut pos = Vec::new();
        for (i, j) in pixels {
            if i == 0 || i > rows {
                return Err(Error::Index { index: i, len: rows });
            }
            if j == 0 || j > cols {
                return Err(Error::Index { index: j, len: cols });
            }
            pos.push((j - 1) * rows + (i - 1));
        }
        Self::from_positions(shape, pos)
    }

    /// Builds a sample set from zero-based offsets into `vec(Z)`.
    pub fn from_positions(shape: Shape, mut pos: Vec<usize>) -> Result<Self> {
        let n = shape.len();
        if let Some(&bad) = pos.iter().find(|&&p| p >= n) {
            return Err(Error::Index { index: bad + 1, len: n });
        }
        pos.sort_unstable();
        pos.dedup();
        if pos.is_empty() {
            return Err(Error::Parameter("sample set must be nonempty".into()));
        }
        Ok(Self { shape, pos })
    }

    /// Every location of the domain.
    pub fn all(shape: Shape) -> Result<Self> {
        Self::from_positions(shape, (0..shape.len()).collect())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Zero-based offsets, ascending.
    pub fn positions(&self) -> &[usize] {
        &self.pos
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.pos.iter().map(|p| p + 1).collect()
    }

    /// One-based pixel pairs, in vectorized (column-major) order.
    pub fn pixels(&self) -> Option<Vec<(usize, usize)>> {
        let (rows, _) = self.shape.grid()?;
        Some(self.pos.iter().map(|p| (p % rows + 1, p / rows + 1)).collect())
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn contains_position(&self, p: usize) -> bool {
        self.pos.binary_search(&p).is_ok()
    }

    /// Boolean mask over the vectorized domain.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.shape.len()];
        for &p in &self.pos {
            m[p] = true;
        }
        m
    }

    /// Zero-based offsets that are not sampled.
    pub fn complement(&self) -> Vec<usize> {
        let m = self.mask();
        (0..m.len()).filter(|&p| !m[p]).collect()
    }

    pub fn union(&self, other: &SampleSet) -> Result<SampleSet> {
        if self.shape != other.shape {
            return Err(Error::Parameter("sample sets have different shapes".into()));
        }
        let mut pos = self.pos.clone();
        pos.extend_from_slice(&other.pos);
        Self::from_positions(self.shape, pos)
    }
}

/// Point-wise depth measurements `y = z_M + eta` with `|eta_k| <= eps_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements<T> {
    samples: SampleSet,
    values: Vec<T>,
    epsilon: T,
    per_sample: Option<Vec<T>>,
}

impl<T: Scalar> Measurements<T> {
    pub fn new(samples: SampleSet, values: Vec<T>, epsilon: T) -> Result<Self> {
        if values.len() != samples.len() {
            return Err(Error::dim(samples.len(), values.len()));
        }
        if !epsilon.is_finite() || epsilon < T::zero() {
            return Err(Error::Parameter(format!("noise bound must be finite and >= 0, got {epsilon}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite measurement".into()));
        }
        Ok(Self {
            samples,
            values,
            epsilon,
            per_sample: None,
        })
    }

    /// Measurements whose noise bound differs per sample. `epsilon()`
    /// reports the largest bound.
    pub fn with_bounds(samples: SampleSet, values: Vec<T>, bounds: Vec<T>) -> Result<Self> {
        if bounds.len() != samples.len() {
            return Err(Error::dim(samples.len(), bounds.len()));
        }
        if bounds.iter().any(|e| !e.is_finite() || *e < T::zero()) {
            return Err(Error::Parameter("noise bounds must be finite and >= 0".into()));
        }
        let eps = bounds.iter().fold(T::zero(), |m, e| m.max(*e));
        let mut m = Self::new(samples, values, eps)?;
        if bounds.iter().any(|e| *e != eps) {
            m.per_sample = Some(bounds);
        }
        Ok(m)
    }

    /// Exact (noiseless unless `epsilon > 0` is declared) samples of `truth`.
    pub fn from_truth<P: AsProfile<T>>(truth: &P, samples: SampleSet, epsilon: T) -> Result<Self> {
        if truth.domain() != samples.shape() {
            return Err(Error::dim(samples.shape().len(), truth.domain().len()));
        }
        let y = subsample(truth, &samples)?;
        Self::new(samples, y, epsilon)
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// Noise bound of the `k`-th sample (in sorted order).
    #[inline]
    pub fn eps_at(&self, k: usize) -> T {
        match &self.per_sample {
            Some(b) => b[k],
            None => self.epsilon,
        }
    }

    pub fn bounds(&self) -> Vec<T> {
        (0..self.values.len()).map(|k| self.eps_at(k)).collect()
    }

    pub fn has_per_sample_bounds(&self) -> bool {
        self.per_sample.is_some()
    }

    /// Largest violation of `|z_M - y| <= eps` (zero when feasible).
    pub fn feasibility_violation(&self, z: &[T]) -> T {
        self.samples
            .positions()
            .iter()
            .enumerate()
            .map(|(k, &p)| ((z[p] - self.values[k]).abs() - self.eps_at(k)).max(T::zero()))
            .fold(T::zero(), |m, v| m.max(v))
    }

    /// Sampled values scattered into a length-`n` vector, zeros elsewhere.
    pub fn scatter(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.samples.shape().len()];
        for (k, &p) in self.samples.positions().iter().enumerate() {
            out[p] = self.values[k];
        }
        out
    }
}

/// Selects the sampled entries `A z = z_M`, in sorted sample order.
pub fn subsample<T: Scalar, P: AsProfile<T>>(profile: &P, samples: &SampleSet) -> Result<Vec<T>> {
    let z = profile.as_vector();
    subsample_slice(z, samples)
}

pub(crate) fn subsample_slice<T: Scalar>(z: &[T], samples: &SampleSet) -> Result<Vec<T>> {
    let n = z.len();
    samples
        .positions()
        .iter()
        .map(|&p| {
            z.get(p)
                .copied()
                .ok_or(Error::Index { index: p + 1, len: n })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectorize_stacks_columns() {
        let z = DepthImage::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(vectorize(&z).values(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn vectorize_single_entry_position() {
        let z = DepthImage::from_fn(3, 3, |i, j| if (i, j) == (1, 2) { 5.0 } else { 0.0 }).unwrap();
        let v = vectorize(&z);
        // one-based index 8 == zero-based 7
        assert_eq!(v.values()[7], 5.0);
        assert_eq!(v.values().iter().filter(|x| **x != 0.0).count(), 1);
    }

    #[test]
    fn devectorize_inverts() {
        let z = devectorize(&[1.0, 3.0, 2.0, 4.0], 2, 2).unwrap();
        assert_eq!(z.to_rows(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(matches!(
            devectorize(&[0.0f64; 6], 2, 4),
            Err(Error::Dimension { expected: 8, actual: 6 })
        ));
        let col = devectorize(&[1.0, 2.0, 3.0], 3, 1).unwrap();
        assert_eq!((col.rows(), col.cols()), (3, 1));
    }

    #[test]
    fn subsample_selects_sorted() {
        let z = Profile1D::new(vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let m = SampleSet::from_indices(Shape::Line(4), [3, 1]).unwrap();
        assert_eq!(subsample(&z, &m).unwrap(), vec![5.0, 7.0]);
        let all = SampleSet::all(Shape::Line(4)).unwrap();
        assert_eq!(subsample(&z, &all).unwrap(), z.values());

        let img = DepthImage::from_fn(3, 3, |i, j| (i * 3 + j) as f64).unwrap();
        let c = SampleSet::from_pixels(3, 3, [(2, 2)]).unwrap();
        assert_eq!(subsample(&img, &c).unwrap(), vec![4.0]);
    }

    #[test]
    fn out_of_range_indices_rejected() {
        assert!(matches!(
            SampleSet::from_indices(Shape::Line(4), [5]),
            Err(Error::Index { index: 5, len: 4 })
        ));
        assert!(SampleSet::from_indices(Shape::Line(4), [0]).is_err());
        assert!(SampleSet::from_pixels(3, 3, [(1, 4)]).is_err());
        assert!(SampleSet::from_indices(Shape::Line(4), []).is_err());
        let short = Profile1D::new(vec![1.0, 2.0]).unwrap();
        let m = SampleSet::from_indices(Shape::Line(4), [4]).unwrap();
        assert!(subsample(&short, &m).is_err());
    }

    #[test]
    fn pixel_pairs_round_trip() {
        let m = SampleSet::from_pixels(4, 5, [(4, 5), (1, 1), (2, 3)]).unwrap();
        assert_eq!(m.pixels().unwrap(), vec![(1, 1), (2, 3), (4, 5)]);
        assert_eq!(m.one_based(), vec![1, 10, 20]);
    }

    #[test]
    fn measurements_validate() {
        let m = SampleSet::from_indices(Shape::Line(4), [1, 2]).unwrap();
        assert!(Measurements::new(m.clone(), vec![1.0], 0.0).is_err());
        assert!(Measurements::new(m.clone(), vec![1.0, 2.0], -0.1).is_err());
        assert!(Measurements::new(m.clone(), vec![1.0, 2.0], f64::NAN).is_err());
        let meas = Measurements::with_bounds(m, vec![1.0, 2.0], vec![0.1, 0.3]).unwrap();
        assert_eq!(meas.epsilon(), 0.3);
        assert_eq!(meas.eps_at(0), 0.1);
        approx::assert_abs_diff_eq!(meas.feasibility_violation(&[1.2, 2.0, 0.0, 0.0]), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn noiseless_truth_is_feasible() {
        let truth = Profile1D::new(vec![0.5, -1.0, 2.0, 3.5]).unwrap();
        let m = SampleSet::from_indices(Shape::Line(4), [2, 4]).unwrap();
        let meas = Measurements::from_truth(&truth, m, 0.0).unwrap();
        assert_eq!(meas.feasibility_violation(truth.values()), 0.0);
    }
}
