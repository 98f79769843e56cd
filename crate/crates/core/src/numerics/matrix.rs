use crate::error::{Error, Result};

/// Counts multiply-accumulates performed by the matmul kernels.
///
/// Only matmuls are counted. A disabled counter ignores every record call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounter {
    macs: u64,
    enabled: bool,
}

impl OpCounter {
    pub fn enabled() -> Self {
        OpCounter {
            macs: 0,
            enabled: true,
        }
    }

    pub fn disabled() -> Self {
        OpCounter::default()
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn mac_count(&self) -> u64 {
        self.macs
    }

    pub fn record(&mut self, macs: u64) {
        if self.enabled {
            self.macs += macs;
        }
    }

    pub fn reset(&mut self) {
        self.macs = 0;
    }
}

/// Dense row-major `f32` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape("Matrix::new", format!("{rows}x{cols} has a zero dimension")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("Matrix::from_rows", "ragged rows"));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Leading `rows x cols` sub-block.
    pub fn prefix(&self, rows: usize, cols: usize) -> Result<Matrix> {
        if rows > self.rows || cols > self.cols {
            return Err(Error::shape(
                "Matrix::prefix",
                format!("{rows}x{cols} from {}x{}", self.rows, self.cols),
            ));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend_from_slice(&self.row(r)[..cols]);
        }
        Matrix::new(rows, cols, data)
    }

    /// Columns `start..start + width` of every row.
    pub fn column_block(&self, start: usize, width: usize) -> Result<Matrix> {
        if start + width > self.cols {
            return Err(Error::shape(
                "Matrix::column_block",
                format!("{start}+{width} exceeds {} columns", self.cols),
            ));
        }
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + width]);
        }
        Matrix::new(self.rows, width, data)
    }

    /// Add `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[f32]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::shape(
                "Matrix::add_row_vector",
                format!("bias of length {} for {} columns", bias.len(), self.cols),
            ));
        }
        for row in self.data.chunks_exact_mut(self.cols) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "Matrix::add_assign",
                format!("{:?} + {:?}", self.shape(), other.shape()),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn map_inplace(&mut self, f: impl Fn(f32) -> f32) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `a × b`. Records `a.rows × a.cols × b.cols` MACs on `counter`.
pub fn matmul(a: &Matrix, b: &Matrix, counter: &mut OpCounter) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "matmul",
            format!("{}x{} times {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0f32; n * m];
    for i in 0..n {
        let out_row = &mut out[i * m..(i + 1) * m];
        let a_row = &a.data[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            let b_row = &b.data[p * m..(p + 1) * m];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    counter.record((n * k * m) as u64);
    Matrix::new(n, m, out)
}

/// `a × bᵀ`. Records `a.rows × a.cols × b.rows` MACs on `counter`.
pub fn matmul_transposed(a: &Matrix, b: &Matrix, counter: &mut OpCounter) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::shape(
            "matmul_transposed",
            format!("{}x{} times ({}x{})^T", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let (n, k, m) = (a.rows, a.cols, b.rows);
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        let a_row = a.row(i);
        for j in 0..m {
            let b_row = b.row(j);
            let mut acc = 0.0f32;
            for (x, y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            out.push(acc);
        }
    }
    counter.record((n * k * m) as u64);
    Matrix::new(n, m, out)
}
