//! Small dense/sparse linear algebra kernels.
//!
//! The systems solved here are a few hundred unknowns at most, so a dense LU
//! with partial pivoting is the workhorse. Assembly goes through a triplet
//! sparse matrix that is compressed to CSR for residual evaluation.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;
use num_traits::{One, Zero};

/// Scalars the LU kernel works over.
pub trait Scalar:
    Copy
    + Zero
    + One
    + core::ops::Add<Output = Self>
    + core::ops::Sub<Output = Self>
    + core::ops::Mul<Output = Self>
    + core::ops::Div<Output = Self>
    + core::ops::Neg<Output = Self>
{
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn modulus(self) -> f64 {
        libm::fabs(self)
    }
}

impl Scalar for Complex64 {
    #[inline]
    fn modulus(self) -> f64 {
        libm::hypot(self.re, self.im)
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (a, b)| acc + *a * *b)
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.modulus() == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Failure of a factorization: the column at which no usable pivot was found.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SingularColumn(pub usize);

/// LU factorization with partial (row) pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &DenseMatrix<T>) -> Result<Self, SingularColumn> {
        assert!(a.is_square(), "LU needs a square matrix");
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = lu.iter().fold(0.0_f64, |m, v| m.max(v.modulus())).max(1e-300);
        let tiny = scale * 1e-14;

        for k in 0..n {
            let mut piv = k;
            let mut best = lu[k * n + k].modulus();
            for i in k + 1..n {
                let v = lu[i * n + k].modulus();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if !(best > tiny) {
                return Err(SingularColumn(k));
            }
            if piv != k {
                for j in 0..n {
                    lu.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                if f.modulus() == 0.0 {
                    continue;
                }
                lu[i * n + k] = f;
                for j in k + 1..n {
                    let ukj = lu[k * n + j];
                    lu[i * n + j] = lu[i * n + j] - f * ukj;
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc = acc - self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc = acc - self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }
}

/// Triplet-form sparse matrix. Duplicate entries are summed on compression.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }

    /// Summed value at `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .iter()
            .filter(|(r, c, _)| *r == i && *c == j)
            .map(|(_, _, v)| *v)
            .sum()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> DenseMatrix<f64> {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
        }
        y
    }

    /// Rows with no stored entry, i.e. structurally empty equations.
    pub fn empty_rows(&self) -> Vec<usize> {
        let mut seen = vec![false; self.rows];
        for &(i, _, _) in &self.entries {
            seen[i] = true;
        }
        (0..self.rows).filter(|i| !seen[*i]).collect()
    }

    /// Columns with no stored entry, i.e. unknowns that appear nowhere.
    pub fn empty_cols(&self) -> Vec<usize> {
        let mut seen = vec![false; self.cols];
        for &(_, j, _) in &self.entries {
            seen[j] = true;
        }
        (0..self.cols).filter(|j| !seen[*j]).collect()
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(libm::fabs(*x)))
}

/// Inverse of a small complex matrix (used for line admittances).
pub fn invert_complex(m: &DenseMatrix<Complex64>) -> Result<DenseMatrix<Complex64>, SingularColumn> {
    let n = m.rows();
    let lu = Lu::factor(m)?;
    let mut inv = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![Complex64::zero(); n];
        e[j] = Complex64::one();
        let col = lu.solve(&e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(inv)
}
