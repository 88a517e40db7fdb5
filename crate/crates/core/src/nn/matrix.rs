//! Row-compressed weight matrices.
//!
//! The logical shape is what the size metric counts; only nonzero entries are
//! held in memory. Block-diagonal stacking of many paths (the Monte Carlo
//! average) would otherwise need gigabytes of explicit zeros.

use nalgebra::DMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(cols <= u32::MAX as usize, "column count exceeds u32 range");
        Matrix {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut b = Builder::new(n, n);
        for (i, &v) in diag.iter().enumerate() {
            b.push(i, v);
            b.end_row();
        }
        b.finish()
    }

    /// Builds from a row-major slice, dropping exact zeros.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length");
        let mut b = Builder::new(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                b.push(j, data[i * cols + j]);
            }
            b.end_row();
        }
        b.finish()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut b = Builder::new(rows.len(), cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            for (j, &v) in r.iter().enumerate() {
                b.push(j, v);
            }
            b.end_row();
        }
        b.finish()
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let mut b = Builder::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                b.push(j, m[(i, j)]);
            }
            b.end_row();
        }
        b.finish()
    }

    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|e| (e.0, e.1));
        let mut b = Builder::new(rows, cols);
        let mut k = 0;
        for i in 0..rows {
            while k < t.len() && t[k].0 == i {
                let j = t[k].1;
                assert!(j < cols, "triplet column out of range");
                let mut v = 0.0;
                while k < t.len() && t[k].0 == i && t[k].1 == j {
                    v += t[k].2;
                    k += 1;
                }
                b.push(j, v);
            }
            b.end_row();
        }
        assert_eq!(k, t.len(), "triplet row out of range");
        b.finish()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[s..e]
            .iter()
            .zip(&self.vals[s..e])
            .map(|(&j, &v)| (j as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[s..e].binary_search(&(j as u32)) {
            Ok(k) => self.vals[s + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                out[i * self.cols + j] = v;
            }
        }
        out
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.to_row_major())
    }

    /// `out = self * x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut acc = 0.0;
            for k in s..e {
                acc += self.vals[k] * x[self.col_idx[k] as usize];
            }
            *o = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.vals.iter_mut().for_each(|v| *v *= s);
        m.drop_zeros()
    }

    /// Sparse product `self * rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension");
        let mut acc = vec![0.0; rhs.cols];
        let mut seen = vec![false; rhs.cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut b = Builder::new(self.rows, rhs.cols);
        for i in 0..self.rows {
            for (k, a) in self.row(i) {
                for (j, v) in rhs.row(k) {
                    if !seen[j] {
                        seen[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * v;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                b.push(j, acc[j]);
                acc[j] = 0.0;
                seen[j] = false;
            }
            touched.clear();
            b.end_row();
        }
        b.finish()
    }

    pub fn add(&self, rhs: &Matrix) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add shape");
        let mut b = Builder::new(self.rows, self.cols);
        for i in 0..self.rows {
            let mut a = self.row(i).peekable();
            let mut c = rhs.row(i).peekable();
            loop {
                match (a.peek().copied(), c.peek().copied()) {
                    (Some((ja, va)), Some((jc, vc))) if ja == jc => {
                        b.push(ja, va + vc);
                        a.next();
                        c.next();
                    }
                    (Some((ja, va)), Some((jc, _))) if ja < jc => {
                        b.push(ja, va);
                        a.next();
                    }
                    (_, Some((jc, vc))) => {
                        b.push(jc, vc);
                        c.next();
                    }
                    (Some((ja, va)), None) => {
                        b.push(ja, va);
                        a.next();
                    }
                    (None, None) => break,
                }
            }
            b.end_row();
        }
        b.finish()
    }

    /// Stacks blocks on top of each other; all must share the column count.
    pub fn vstack(blocks: &[&Matrix]) -> Self {
        let cols = blocks.first().map_or(0, |m| m.cols);
        let rows = blocks.iter().map(|m| m.rows).sum();
        let mut b = Builder::new(rows, cols);
        for m in blocks {
            assert_eq!(m.cols, cols, "vstack column count");
            for i in 0..m.rows {
                for (j, v) in m.row(i) {
                    b.push(j, v);
                }
                b.end_row();
            }
        }
        b.finish()
    }

    /// Places blocks side by side; all must share the row count.
    pub fn hstack(blocks: &[&Matrix]) -> Self {
        let rows = blocks.first().map_or(0, |m| m.rows);
        let cols = blocks.iter().map(|m| m.cols).sum();
        let mut b = Builder::new(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for m in blocks {
                assert_eq!(m.rows, rows, "hstack row count");
                for (j, v) in m.row(i) {
                    b.push(off + j, v);
                }
                off += m.cols;
            }
            b.end_row();
        }
        b.finish()
    }

    pub fn block_diag(blocks: &[&Matrix]) -> Self {
        let rows = blocks.iter().map(|m| m.rows).sum();
        let cols = blocks.iter().map(|m| m.cols).sum();
        let nnz = blocks.iter().map(|m| m.nnz()).sum();
        let mut b = Builder::with_capacity(rows, cols, nnz);
        let mut off = 0;
        for m in blocks {
            for i in 0..m.rows {
                for (j, v) in m.row(i) {
                    b.push(off + j, v);
                }
                b.end_row();
            }
            off += m.cols;
        }
        b.finish()
    }

    /// Grows the logical shape with zero rows and columns appended.
    pub fn padded(&self, rows: usize, cols: usize) -> Self {
        assert!(
            rows >= self.rows && cols >= self.cols,
            "padding cannot shrink"
        );
        let mut m = self.clone();
        m.cols = cols;
        let last = *m.row_ptr.last().unwrap();
        m.row_ptr.resize(rows + 1, last);
        m.rows = rows;
        m
    }

    pub fn is_finite(&self) -> bool {
        self.vals.iter().all(|v| v.is_finite())
    }

    fn drop_zeros(self) -> Self {
        if self.vals.iter().all(|&v| v != 0.0) {
            return self;
        }
        let mut b = Builder::new(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                b.push(j, v);
            }
            b.end_row();
        }
        b.finish()
    }
}

/// Row-by-row assembly with strictly increasing columns inside a row.
pub(crate) struct Builder {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<f64>,
}

impl Builder {
    pub(crate) fn new(rows: usize, cols: usize) -> Self {
        Self::with_capacity(rows, cols, 0)
    }

    pub(crate) fn with_capacity(rows: usize, cols: usize, nnz: usize) -> Self {
        assert!(cols <= u32::MAX as usize, "column count exceeds u32 range");
        let mut row_ptr = Vec::with_capacity(rows + 1);
        row_ptr.push(0);
        Builder {
            rows,
            cols,
            row_ptr,
            col_idx: Vec::with_capacity(nnz),
            vals: Vec::with_capacity(nnz),
        }
    }

    pub(crate) fn push(&mut self, j: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        debug_assert!(j < self.cols);
        let start = *self.row_ptr.last().unwrap();
        debug_assert!(self.col_idx.len() == start || (*self.col_idx.last().unwrap() as usize) < j);
        self.col_idx.push(j as u32);
        self.vals.push(v);
    }

    pub(crate) fn end_row(&mut self) {
        self.row_ptr.push(self.vals.len());
    }

    pub(crate) fn finish(self) -> Matrix {
        assert_eq!(self.row_ptr.len(), self.rows + 1, "builder row count");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr: self.row_ptr,
            col_idx: self.col_idx,
            vals: self.vals,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(m: &Matrix) -> DMatrix<f64> {
        m.to_dmatrix()
    }

    #[test]
    fn product_and_sum_match_dense() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, -3.0, 0.0]]);
        let b = Matrix::from_rows(&[vec![0.5, 1.0], vec![0.0, 2.0], vec![4.0, 0.0]]);
        assert_eq!(dense(&a.matmul(&b)), dense(&a) * dense(&b));
        assert_eq!(dense(&a.add(&a.scaled(-2.0))), dense(&a) * -1.0);
    }

    #[test]
    fn stacking_shapes() {
        let a = Matrix::identity(2);
        let b = Matrix::from_rows(&[vec![1.0, 2.0]]);
        let v = Matrix::vstack(&[&a, &b]);
        assert_eq!((v.rows(), v.cols()), (3, 2));
        assert_eq!(v.get(2, 1), 2.0);
        let d = Matrix::block_diag(&[&a, &b]);
        assert_eq!((d.rows(), d.cols()), (3, 4));
        assert_eq!(d.get(2, 3), 2.0);
        assert_eq!(d.get(0, 2), 0.0);
        let h = Matrix::hstack(&[&a, &a]);
        assert_eq!(
            h.to_row_major(),
            vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]
        );
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = Matrix::from_triplets(2, 2, vec![(1, 0, 1.0), (0, 1, 2.0), (1, 0, 3.0)]);
        assert_eq!(m.to_row_major(), vec![0.0, 2.0, 4.0, 0.0]);
    }

    #[test]
    fn padding_keeps_entries() {
        let m = Matrix::identity(2).padded(3, 4);
        assert_eq!((m.rows(), m.cols()), (3, 4));
        assert_eq!(m.mul_vec(&[1.0, 2.0, 3.0, 4.0]), vec![1.0, 2.0, 0.0]);
    }
}
