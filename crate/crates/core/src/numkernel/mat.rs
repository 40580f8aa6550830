use super::{KernelError, Real};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Dot product with eight independent accumulators so the loop vectorizes
/// without reassociating a single running sum.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(y: &mut [T], alpha: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, KernelError> {
        if data.len() != rows * cols {
            return Err(KernelError::ShapeMismatch {
                op: "from_vec",
                expected: (rows, cols),
                got: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Result<Self, KernelError> {
        Self::from_vec(rows, cols, data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Single-row matrix.
    pub fn row_vector(data: Vec<T>) -> Self {
        Self { rows: 1, cols: data.len(), data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.f64()).collect()
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Debug-build guard against NaN/Inf leaking out of an op.
    #[inline]
    pub fn debug_assert_finite(&self, op: &str) {
        debug_assert!(self.is_finite(), "non-finite value produced by {op}");
    }

    /// Column-wise concatenation `[a | b | ...]`; all parts must share `rows`.
    pub fn hcat(parts: &[&Mat<T>]) -> Result<Self, KernelError> {
        let rows = parts.first().map_or(0, |m| m.rows);
        let mut cols = 0;
        for p in parts {
            if p.rows != rows {
                return Err(KernelError::ShapeMismatch { op: "hcat", expected: (rows, p.cols), got: p.shape() });
            }
            cols += p.cols;
        }
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(p.row(r));
            }
        }
        Ok(Self { rows, cols, data: out })
    }

    /// Columns `start..start + width`.
    pub fn col_slice(&self, start: usize, width: usize) -> Self {
        assert!(start + width <= self.cols, "col_slice out of range");
        let mut out = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            out.extend_from_slice(&self.row(r)[start..start + width]);
        }
        Self { rows: self.rows, cols: width, data: out }
    }

    fn check_inner(op: &'static str, expected: (usize, usize), got: (usize, usize)) -> Result<(), KernelError> {
        if expected != got {
            return Err(KernelError::ShapeMismatch { op, expected, got });
        }
        Ok(())
    }

    /// `a · b`
    pub fn matmul(&self, b: &Mat<T>) -> Result<Mat<T>, KernelError> {
        if self.cols != b.rows {
            return Err(KernelError::ShapeMismatch { op: "matmul", expected: (self.cols, b.cols), got: b.shape() });
        }
        let mut out = Mat::zeros(self.rows, b.cols);
        out.add_matmul(self, b);
        out.debug_assert_finite("matmul");
        Ok(out)
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&self, b: &Mat<T>) -> Result<Mat<T>, KernelError> {
        Self::check_inner("matmul_nt", (self.cols, b.rows), (b.cols, b.rows))?;
        let mut out = Mat::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let ar = self.row(i);
            let orow = &mut out.data[i * b.rows..(i + 1) * b.rows];
            for (j, o) in orow.iter_mut().enumerate() {
                *o = dot(ar, b.row(j));
            }
        }
        out.debug_assert_finite("matmul_nt");
        Ok(out)
    }

    /// `self += a · b`
    pub fn add_matmul(&mut self, a: &Mat<T>, b: &Mat<T>) {
        assert!(a.cols == b.rows && self.rows == a.rows && self.cols == b.cols, "add_matmul shape");
        let n = b.cols;
        for i in 0..a.rows {
            let orow = &mut self.data[i * n..(i + 1) * n];
            for k in 0..a.cols {
                let aik = a.data[i * a.cols + k];
                if aik != T::zero() {
                    axpy(orow, aik, b.row(k));
                }
            }
        }
    }

    /// `self += aᵀ · b`
    pub fn add_matmul_tn(&mut self, a: &Mat<T>, b: &Mat<T>) {
        assert!(a.rows == b.rows && self.rows == a.cols && self.cols == b.cols, "add_matmul_tn shape");
        let n = b.cols;
        for r in 0..a.rows {
            let arow = a.row(r);
            let brow = b.row(r);
            for (i, &ai) in arow.iter().enumerate() {
                if ai != T::zero() {
                    axpy(&mut self.data[i * n..(i + 1) * n], ai, brow);
                }
            }
        }
    }

    /// `self += a · bᵀ`
    pub fn add_matmul_nt(&mut self, a: &Mat<T>, b: &Mat<T>) {
        assert!(a.cols == b.cols && self.rows == a.rows && self.cols == b.rows, "add_matmul_nt shape");
        for i in 0..a.rows {
            let ar = a.row(i);
            for j in 0..b.rows {
                let v = dot(ar, b.row(j));
                self.data[i * self.cols + j] += v;
            }
        }
    }
}

/// Backward of `out = a · b`: accumulates `dout · bᵀ` into `da` and `aᵀ · dout` into `db`.
pub fn matmul_backward<T: Real>(a: &Mat<T>, b: &Mat<T>, dout: &Mat<T>, da: &mut Mat<T>, db: &mut Mat<T>) {
    da.add_matmul_nt(dout, b);
    db.add_matmul_tn(a, dout);
}
