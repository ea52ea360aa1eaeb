use alloc::vec::Vec;

use crate::error::{Error, Result};

/// An `n × d` block of observations stored row-major; each row is one point
/// in `ℝ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    rows: usize,
    dim: usize,
}

impl Sample {
    pub fn new(data: Vec<f64>, rows: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("sample dimension"));
        }
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                expected: rows * dim,
                found: data.len(),
            });
        }
        Ok(Sample { data, rows, dim })
    }

    /// Builds a sample from row slices, which must all have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("sample rows"))?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Sample::new(data, rows.len(), dim)
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Stacks `self` on top of `other`: the pooled sample `Z = X ∪ Y` with
    /// the first `self.len()` rows coming from `self`.
    pub fn concat(&self, other: &Sample) -> Result<Sample> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Sample::new(data, self.rows + other.rows, self.dim)
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Sample {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Sample {
            data,
            rows: indices.len(),
            dim: self.dim,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn ragged_rows_are_rejected() {
        let err = Sample::from_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                found: 1
            }
        );
    }

    #[test]
    fn concat_keeps_order() {
        let x = Sample::from_rows(&[[1.0], [2.0]]).unwrap();
        let y = Sample::from_rows(&[[3.0]]).unwrap();
        let z = x.concat(&y).unwrap();
        assert_eq!(z.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(z.select(&[2, 0]).as_slice(), &[3.0, 1.0]);
    }
}
