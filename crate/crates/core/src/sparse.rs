//! Real symmetric sparse storage and the operator abstraction shared by the
//! propagator and the eigensolvers.

use std::io::{Read, Write};
use std::ops::{Add, AddAssign, Mul, Sub, SubAssign};

use num_complex::Complex64;
use num_traits::Zero;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Element type an operator can act on. Real operators act on real and complex
/// vectors alike.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Zero
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
    + SubAssign
    + 'static
{
    fn abs_sqr(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn abs_sqr(self) -> f64 {
        self * self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    fn abs_sqr(self) -> f64 {
        self.norm_sqr()
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// A real symmetric linear map.
pub trait Operator: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`. Lengths are the caller's responsibility.
    fn apply_into<S: Scalar>(&self, x: &[S], y: &mut [S]);

    fn apply<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.dim() {
            return invalid(format!(
                "vector length {} does not match operator dimension {}",
                x.len(),
                self.dim()
            ));
        }
        let mut y = vec![S::zero(); x.len()];
        self.apply_into(x, &mut y);
        Ok(y)
    }
}

impl<O: Operator> Operator for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply_into<S: Scalar>(&self, x: &[S], y: &mut [S]) {
        (**self).apply_into(x, y)
    }
}

/// Rows per rayon task in the matvec.
const ROW_CHUNK: usize = 4096;

/// Symmetric matrix held as a dense diagonal plus an off-diagonal CSR block
/// that stores both triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricCsr {
    pub(crate) diag: Vec<f64>,
    pub(crate) row_ptr: Vec<usize>,
    pub(crate) cols: Vec<u32>,
    pub(crate) vals: Vec<f64>,
}

impl SymmetricCsr {
    /// Assembles from a diagonal and the strictly upper-triangular entries.
    /// Repeated `(i, j)` pairs are summed.
    pub fn from_upper(diag: Vec<f64>, upper: &[(usize, usize, f64)]) -> Result<Self> {
        let dim = diag.len();
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
        for &(i, j, v) in upper {
            if i >= j || j >= dim {
                return invalid(format!("entry ({i}, {j}) is not strictly upper triangular in dim {dim}"));
            }
            rows[i].push((j as u32, v));
            rows[j].push((i as u32, v));
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            diag,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn from_dense(dim: usize, a: &[f64]) -> Result<Self> {
        if a.len() != dim * dim {
            return invalid("dense matrix has the wrong number of entries");
        }
        let mut upper = Vec::new();
        for i in 0..dim {
            for j in i + 1..dim {
                if a[i * dim + j] != a[j * dim + i] {
                    return invalid(format!("matrix is not symmetric at ({i}, {j})"));
                }
                if a[i * dim + j] != 0.0 {
                    upper.push((i, j, a[i * dim + j]));
                }
            }
        }
        Self::from_upper((0..dim).map(|i| a[i * dim + i]).collect(), &upper)
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Stored nonzeros including nonzero diagonal entries.
    pub fn nnz(&self) -> usize {
        self.vals.len() + self.diag.iter().filter(|d| **d != 0.0).count()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal `(column, value)` pairs of one row, ascending by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().map(|&c| c as usize).zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&(j as u32)) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = self.diag[i];
            for (j, v) in self.row(i) {
                a[i * n + j] = v;
            }
        }
        a
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    fn apply_rows<S: Scalar>(&self, first: usize, x: &[S], y: &mut [S]) {
        for (k, out) in y.iter_mut().enumerate() {
            let i = first + k;
            let mut acc = x[i] * self.diag[i];
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += x[self.cols[p] as usize] * self.vals[p];
            }
            *out = acc;
        }
    }

    /// Writes the full matrix (diagonal included) as little-endian
    /// `u64 dim, u64 nnz, (dim + 1) x u64 row offsets, nnz x u32 column
    /// indices, nnz x f64 values`. Rows are sorted by column.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.dim();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0u64);
        for i in 0..n {
            let mut diag_done = self.diag[i] == 0.0;
            for (j, v) in self.row(i) {
                if !diag_done && j > i {
                    cols.push(i as u32);
                    vals.push(self.diag[i]);
                    diag_done = true;
                }
                cols.push(j as u32);
                vals.push(v);
            }
            if !diag_done {
                cols.push(i as u32);
                vals.push(self.diag[i]);
            }
            offsets.push(cols.len() as u64);
        }
        w.write_all(&(n as u64).to_le_bytes())?;
        w.write_all(&(cols.len() as u64).to_le_bytes())?;
        for o in offsets {
            w.write_all(&o.to_le_bytes())?;
        }
        for c in cols {
            w.write_all(&c.to_le_bytes())?;
        }
        for v in vals {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        fn u64_at<R: Read>(r: &mut R) -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        }
        let n = u64_at(&mut r)? as usize;
        let nnz = u64_at(&mut r)? as usize;
        let offsets = (0..=n).map(|_| u64_at(&mut r).map(|o| o as usize)).collect::<Result<Vec<_>>>()?;
        let mut cols = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            cols.push(u32::from_le_bytes(b) as usize);
        }
        let vals = (0..nnz).map(|_| u64_at(&mut r).map(f64::from_bits)).collect::<Result<Vec<_>>>()?;
        if offsets.last() != Some(&nnz) {
            return Err(Error::Numeric("corrupt matrix dump: offsets do not end at nnz".into()));
        }
        let mut diag = vec![0.0; n];
        let mut upper = Vec::new();
        for i in 0..n {
            for p in offsets[i]..offsets[i + 1] {
                let j = cols[p];
                match j.cmp(&i) {
                    std::cmp::Ordering::Equal => diag[i] = vals[p],
                    std::cmp::Ordering::Greater => upper.push((i, j, vals[p])),
                    std::cmp::Ordering::Less => {}
                }
            }
        }
        Self::from_upper(diag, &upper)
    }
}

impl Operator for SymmetricCsr {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Fixed row order: every row is a left-to-right sum over its sorted
    /// columns, so the result does not depend on the thread count.
    fn apply_into<S: Scalar>(&self, x: &[S], y: &mut [S]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        if self.dim() <= 4 * ROW_CHUNK {
            self.apply_rows(0, x, y);
        } else {
            y.par_chunks_mut(ROW_CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| self.apply_rows(c * ROW_CHUNK, x, chunk));
        }
    }
}
