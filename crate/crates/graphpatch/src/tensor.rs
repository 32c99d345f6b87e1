//! Dense row-major f32 matrices and the handful of kernels the models need.
//! Reductions accumulate in f64 so results do not depend on summation
//! chunking; storage stays f32. Shape violations are programming errors and
//! panic with a descriptive message rather than returning `Err`.

/// Row-major matrix of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match {rows}x{cols}",
            data.len()
        );
        Matrix { rows, cols, data }
    }

    /// Identity, for tests and initialization.
    pub fn eye(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    /// Append one row; the matrix must have matching width.
    pub fn push_row(&mut self, row: &[f32]) {
        assert_eq!(row.len(), self.cols, "row width {} vs matrix width {}", row.len(), self.cols);
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add_assign shape");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f32) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Broadcast-add a length-`cols` bias to every row.
    pub fn add_bias(&mut self, bias: &[f32]) {
        assert_eq!(bias.len(), self.cols, "bias width");
        for r in 0..self.rows {
            for (v, b) in self.row_mut(r).iter_mut().zip(bias) {
                *v += b;
            }
        }
    }
}

/// `a · b` with f64 accumulation.
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul: {}x{} · {}x{}", a.rows, a.cols, b.rows, b.cols);
    let mut out = vec![0.0f64; a.rows * b.cols];
    for i in 0..a.rows {
        let arow = a.row(i);
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let aik = aik as f64;
            let brow = b.row(k);
            let orow = &mut out[i * b.cols..(i + 1) * b.cols];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj as f64;
            }
        }
    }
    let m = Matrix {
        rows: a.rows,
        cols: b.cols,
        data: out.into_iter().map(|v| v as f32).collect(),
    };
    debug_assert!(m.is_finite(), "matmul produced non-finite entries");
    m
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_at_b(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.rows, b.rows, "matmul_at_b: {}x{} ᵀ· {}x{}", a.rows, a.cols, b.rows, b.cols);
    let mut out = vec![0.0f64; a.cols * b.cols];
    for r in 0..a.rows {
        let arow = a.row(r);
        let brow = b.row(r);
        for (i, &ari) in arow.iter().enumerate() {
            if ari == 0.0 {
                continue;
            }
            let ari = ari as f64;
            let orow = &mut out[i * b.cols..(i + 1) * b.cols];
            for (o, &brj) in orow.iter_mut().zip(brow) {
                *o += ari * brj as f64;
            }
        }
    }
    Matrix {
        rows: a.cols,
        cols: b.cols,
        data: out.into_iter().map(|v| v as f32).collect(),
    }
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_a_bt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols, "matmul_a_bt: {}x{} · {}x{}ᵀ", a.rows, a.cols, b.rows, b.cols);
    let mut out = vec![0.0f64; a.rows * b.rows];
    for i in 0..a.rows {
        let arow = a.row(i);
        for j in 0..b.rows {
            let brow = b.row(j);
            let mut acc = 0.0f64;
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x as f64 * y as f64;
            }
            out[i * b.rows + j] = acc;
        }
    }
    Matrix {
        rows: a.rows,
        cols: b.rows,
        data: out.into_iter().map(|v| v as f32).collect(),
    }
}

/// Elementwise max(x, 0).
pub fn relu(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for v in &mut out.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Backward of relu: upstream gradient masked by pre-activation sign.
pub fn relu_backward(pre: &Matrix, upstream: &Matrix) -> Matrix {
    assert_eq!((pre.rows, pre.cols), (upstream.rows, upstream.cols), "relu_backward shape");
    let mut out = upstream.clone();
    for (g, &p) in out.data.iter_mut().zip(&pre.data) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

/// Row-wise softmax with max subtraction; every output row sums to 1 within
/// 1e-6 for any finite input.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let row = x.row(r);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut sum = 0.0f64;
        let mut exps = vec![0.0f64; x.cols];
        for (e, &v) in exps.iter_mut().zip(row) {
            *e = ((v as f64) - max).exp();
            sum += *e;
        }
        for (o, e) in out.row_mut(r).iter_mut().zip(&exps) {
            *o = (e / sum) as f32;
        }
    }
    debug_assert!(out.is_finite(), "softmax produced non-finite entries");
    out
}

/// Backward of a row-wise softmax given upstream gradients w.r.t. the
/// softmax output: dlogits = y ⊙ (g − ⟨g, y⟩) per row.
pub fn softmax_backward(softmax_out: &Matrix, upstream: &Matrix) -> Matrix {
    assert_eq!(
        (softmax_out.rows, softmax_out.cols),
        (upstream.rows, upstream.cols),
        "softmax_backward shape"
    );
    let mut out = Matrix::zeros(softmax_out.rows, softmax_out.cols);
    for r in 0..softmax_out.rows {
        let y = softmax_out.row(r);
        let g = upstream.row(r);
        let dot: f64 = y.iter().zip(g).map(|(&yi, &gi)| yi as f64 * gi as f64).sum();
        for (o, (&yi, &gi)) in out.row_mut(r).iter_mut().zip(y.iter().zip(g)) {
            *o = (yi as f64 * (gi as f64 - dot)) as f32;
        }
    }
    out
}
