//! Row-compressed sparse generators.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sign/orientation convention of a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    /// Intensity matrix `W`: off-diagonal rates, zero row sums.
    Intensity,
    /// Quantum Hamiltonian form `H = -W^T`: zero column sums.
    Hamiltonian,
}

/// Square sparse matrix in compressed-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGenerator<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
    convention: Convention,
}

/// Triplet accumulator; duplicate `(row, col)` entries are summed on build.
#[derive(Debug, Clone)]
pub struct GeneratorBuilder<T> {
    dim: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> GeneratorBuilder<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, cap: usize) -> Self {
        Self {
            dim,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.dim && col < self.dim);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self, convention: Convention) -> SparseGenerator<T> {
        self.entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.dim + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<T> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *vals.last_mut().expect("previous entry") += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..self.dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseGenerator {
            dim: self.dim,
            row_ptr,
            cols,
            vals,
            convention,
        }
    }
}

impl<T: Scalar> SparseGenerator<T> {
    pub fn zeros(dim: usize, convention: Convention) -> Self {
        GeneratorBuilder::new(dim).build(convention)
    }

    /// `c * I`.
    pub fn scaled_identity(dim: usize, c: T, convention: Convention) -> Self {
        let mut b = GeneratorBuilder::with_capacity(dim, dim);
        for i in 0..dim {
            b.add(i, i, c);
        }
        b.build(convention)
    }

    /// Builds from a dense row-major matrix, dropping exact zeros.
    pub fn from_dense(dim: usize, dense: &[T], convention: Convention) -> Result<Self> {
        if dense.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: dense.len(),
            });
        }
        let mut b = GeneratorBuilder::new(dim);
        for i in 0..dim {
            for j in 0..dim {
                let v = dense[i * dim + j];
                if v != T::zero() {
                    b.add(i, j, v);
                }
            }
        }
        Ok(b.build(convention))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    /// Stored entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map_or(T::zero(), |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut b = GeneratorBuilder::with_capacity(self.dim, self.nnz());
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                b.add(j, i, v);
            }
        }
        b.build(self.convention)
    }

    /// `-G^T` with the convention flipped; maps `W` to `H` and back.
    pub fn negative_transpose(&self) -> Self {
        let mut t = self.transpose();
        for v in &mut t.vals {
            *v = -*v;
        }
        t.convention = match self.convention {
            Convention::Intensity => Convention::Hamiltonian,
            Convention::Hamiltonian => Convention::Intensity,
        };
        t
    }

    pub(crate) fn negated(&self) -> Self {
        let mut m = self.clone();
        for v in &mut m.vals {
            *v = -*v;
        }
        m
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.dim * self.dim];
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                d[i * self.dim + j] += v;
            }
        }
        d
    }

    fn check_len(&self, v: &[T]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `G v`; rows are processed in parallel.
    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v)?;
        let mut out = vec![T::zero(); self.dim];
        self.matvec_into(v, &mut out);
        Ok(out)
    }

    pub(crate) fn matvec_into(&self, v: &[T], out: &mut [T]) {
        const PAR_THRESHOLD: usize = 4096;
        let row = |i: usize| self.row(i).fold(T::zero(), |acc, (j, g)| acc + g * v[j]);
        if self.dim >= PAR_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = row(i));
        } else {
            out.iter_mut().enumerate().for_each(|(i, o)| *o = row(i));
        }
    }

    /// Row-vector product `v^T G`.
    pub fn vecmat(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v)?;
        let mut out = vec![T::zero(); self.dim];
        for (i, &vi) in v.iter().enumerate() {
            if vi == T::zero() {
                continue;
            }
            for (j, g) in self.row(i) {
                out[j] += vi * g;
            }
        }
        Ok(out)
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.dim)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut s = vec![T::zero(); self.dim];
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                s[j] += v;
            }
        }
        s
    }

    /// Largest violation of the convention's invariant: the row (intensity)
    /// or column (Hamiltonian) sums, and the sign of off-diagonal entries.
    pub fn invariant_violation(&self) -> T {
        let (sums, sign) = match self.convention {
            Convention::Intensity => (self.row_sums(), T::one()),
            Convention::Hamiltonian => (self.col_sums(), -T::one()),
        };
        let mut worst = sums.iter().fold(T::zero(), |m, s| m.max(s.abs()));
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                if i != j {
                    worst = worst.max((-(sign * v)).max(T::zero()));
                }
            }
        }
        worst
    }

    /// Checks [`Self::invariant_violation`] against `tol`.
    pub fn validate(&self, tol: T) -> Result<()> {
        let v = self.invariant_violation();
        if v.is_nan() || v > tol {
            return Err(Error::Postcondition(format!(
                "{:?} generator violates its sum/sign invariant by {v}",
                self.convention
            )));
        }
        Ok(())
    }

    /// Largest diagonal magnitude.
    pub fn max_exit_rate(&self) -> T {
        self.diagonal().iter().fold(T::zero(), |m, d| m.max(d.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.vals.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(a: f64, b: f64) -> SparseGenerator<f64> {
        SparseGenerator::from_dense(2, &[-a, a, b, -b], Convention::Intensity).unwrap()
    }

    #[test]
    fn zero_and_identity() {
        let z = SparseGenerator::<f64>::zeros(3, Convention::Intensity);
        assert_eq!(z.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
        let c = SparseGenerator::scaled_identity(3, 2.5, Convention::Intensity);
        assert_eq!(c.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![2.5, 5.0, 7.5]);
    }

    #[test]
    fn left_multiplication_of_two_state_chain() {
        let w = two_state(0.7, 1.3);
        assert_eq!(w.vecmat(&[1.0, 0.0]).unwrap(), vec![-0.7, 0.7]);
        assert!(w.validate(1e-13).is_ok());
        assert!(w.matvec(&[1.0]).is_err());
    }

    #[test]
    fn duplicates_are_summed() {
        let mut b = GeneratorBuilder::new(2);
        b.add(0, 1, 1.0);
        b.add(0, 1, 2.0);
        b.add(0, 0, -3.0);
        let g = b.build(Convention::Intensity);
        assert_eq!(g.nnz(), 2);
        assert_eq!(g.get(0, 1), 3.0);
    }

    #[test]
    fn negative_transpose_flips_convention() {
        let w = two_state(0.4, 2.0);
        let h = w.negative_transpose();
        assert_eq!(h.convention(), Convention::Hamiltonian);
        assert!(h.validate(1e-13).is_ok());
        assert_eq!(h.get(1, 0), -0.4);
        // a Hamiltonian-flagged W fails its invariant
        let bad = SparseGenerator::from_dense(2, &[-1.0, 1.0, 2.0, -2.0], Convention::Hamiltonian).unwrap();
        assert!(bad.validate(1e-13).is_err());
    }
}
