//! Dense point storage and the shared distance kernel.
//!
//! Every Euclidean distance in the crate goes through [`squared_distance`], so
//! the brute-force oracle and the accelerated indices agree bit-for-bit.

use crate::error::{Error, Result};

const LANES: usize = 8;

/// Squared Euclidean distance with a fixed summation order.
///
/// Coordinate `i` accumulates into lane `i % 8` in increasing `i`; the lanes
/// are combined as `((l0+l1)+(l2+l3))+((l4+l5)+(l6+l7))`. Zero padding on both
/// inputs leaves the result unchanged.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..LANES {
            let t = x[j] - y[j];
            acc[j] += t * t;
        }
    }
    for (j, (x, y)) in ra.iter().zip(rb).enumerate() {
        let t = x - y;
        acc[j] += t * t;
    }
    combine_lanes(&acc)
}

#[inline]
pub(crate) fn combine_lanes(acc: &[f64; LANES]) -> f64 {
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Euclidean distance, `sqrt` of [`squared_distance`].
#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Arithmetic mean of the given rows as a running mean `m += (x - m) / k`,
/// in iteration order. Exact when every row is identical.
pub fn mean_of<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Option<Vec<f64>> {
    let mut mean = vec![0.0; dim];
    let mut count = 0usize;
    for row in rows {
        count += 1;
        let k = count as f64;
        for (m, v) in mean.iter_mut().zip(row) {
            *m += (v - *m) / k;
        }
    }
    (count > 0).then_some(mean)
}

/// Sum of `distance(c[i], c[j])` over pairs `i < j`, in ascending `(i, j)`
/// order.
pub fn pairwise_distance_sum(centers: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            total += distance(&centers[i], &centers[j]);
        }
    }
    total
}

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("vector contains NaN or infinite values"))
    }
}

/// Row-major matrix of points sharing one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMatrix {
    data: Vec<f64>,
    dim: usize,
}

impl PointMatrix {
    pub fn new(dim: usize) -> Self {
        PointMatrix { data: Vec::new(), dim }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 && !data.is_empty() {
            return Err(Error::invalid("zero dimension with non-empty data"));
        }
        if dim > 0 && !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "flat length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(PointMatrix { data, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = PointMatrix::new(dim);
        for r in rows {
            m.push(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if self.is_empty() && self.dim == 0 {
            self.dim = row.len();
        }
        if row.len() != self.dim {
            return Err(Error::Dim {
                expected: self.dim,
                found: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        let dim = self.dim.max(1);
        self.data.chunks_exact(dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Copies the selected rows into a new matrix, in the given order.
    pub fn select(&self, ordinals: &[usize]) -> PointMatrix {
        let mut data = Vec::with_capacity(ordinals.len() * self.dim);
        for &o in ordinals {
            data.extend_from_slice(self.row(o));
        }
        PointMatrix {
            data,
            dim: self.dim,
        }
    }

    /// Adds `offset` to every row.
    pub fn translate(&mut self, offset: &[f64]) {
        assert_eq!(offset.len(), self.dim);
        for row in self.data.chunks_exact_mut(self.dim.max(1)) {
            for (x, o) in row.iter_mut().zip(offset) {
                *x += o;
            }
        }
    }

    pub fn mean(&self) -> Option<Vec<f64>> {
        mean_of(self.dim, self.rows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squared_distance_matches_naive_on_small_inputs() {
        let a = [1.0, 2.0, 3.0];
        let b = [4.0, 6.0, 3.0];
        assert_eq!(squared_distance(&a, &b), 25.0);
        assert_eq!(distance(&a, &b), 5.0);
    }

    #[test]
    fn zero_padding_is_invisible() {
        let a: Vec<f64> = (0..13).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..13).map(|i| (i as f64 * 1.91).cos()).collect();
        let mut ap = a.clone();
        let mut bp = b.clone();
        ap.resize(16, 0.0);
        bp.resize(16, 0.0);
        assert_eq!(
            squared_distance(&a, &b).to_bits(),
            squared_distance(&ap, &bp).to_bits()
        );
    }

    #[test]
    fn mean_and_select() {
        let m = PointMatrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0], vec![4.0, 8.0]]).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.select(&[0, 1]).mean().unwrap(), vec![1.0, 1.0]);
        assert!(PointMatrix::new(2).mean().is_none());
    }

    #[test]
    fn push_rejects_wrong_dimension() {
        let mut m = PointMatrix::new(2);
        m.push(&[1.0, 2.0]).unwrap();
        assert!(m.push(&[1.0]).is_err());
    }
}
