use super::NeuralError;

/// Dense row-major `rows x cols` matrix of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, NeuralError> {
        if data.len() != rows * cols {
            return Err(NeuralError::Shape(format!(
                "{} values cannot fill a {rows}x{cols} tensor",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, NeuralError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NeuralError::Shape("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
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

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.data[i * self.cols + j] = v;
    }

    pub fn ensure_finite(&self, what: &str) -> Result<(), NeuralError> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(NeuralError::NonFinite(what.to_string()))
        }
    }

    /// Stacks `self` on top of `other`.
    pub fn concat_rows(&self, other: &Tensor) -> Result<Tensor, NeuralError> {
        if self.cols != other.cols {
            return Err(NeuralError::Shape(format!(
                "concat_rows: {} vs {} columns",
                self.cols, other.cols
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Tensor { rows: self.rows + other.rows, cols: self.cols, data })
    }

    /// Places `other`'s columns to the right of `self`'s.
    pub fn concat_cols(&self, other: &Tensor) -> Result<Tensor, NeuralError> {
        if self.rows != other.rows {
            return Err(NeuralError::Shape(format!("concat_cols: {} vs {} rows", self.rows, other.rows)));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Tensor { rows: self.rows, cols, data })
    }

    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Tensor {
        let data = self.data[range.start * self.cols..range.end * self.cols].to_vec();
        Tensor { rows: range.len(), cols: self.cols, data }
    }

    pub fn slice_cols(&self, range: std::ops::Range<usize>) -> Tensor {
        let mut data = Vec::with_capacity(self.rows * range.len());
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[range.clone()]);
        }
        Tensor { rows: self.rows, cols: range.len(), data }
    }

    /// Column sums accumulated in `f64`.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.cols];
        for i in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(i)) {
                *o += f64::from(v);
            }
        }
        out
    }

    pub fn add_row_vector(&mut self, v: &[f32]) {
        debug_assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            for (x, &b) in self.row_mut(i).iter_mut().zip(v) {
                *x += b;
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Layout {
    Normal,
    Transposed,
}

fn gemm(a: &Tensor, la: Layout, b: &Tensor, lb: Layout) -> Result<Tensor, NeuralError> {
    let (m, k, rsa, csa) = match la {
        Layout::Normal => (a.rows, a.cols, a.cols as isize, 1),
        Layout::Transposed => (a.cols, a.rows, 1, a.cols as isize),
    };
    let (k2, n, rsb, csb) = match lb {
        Layout::Normal => (b.rows, b.cols, b.cols as isize, 1),
        Layout::Transposed => (b.cols, b.rows, 1, b.cols as isize),
    };
    if k != k2 {
        return Err(NeuralError::Shape(format!(
            "matmul inner dimensions differ: {m}x{k} times {k2}x{n}"
        )));
    }
    let mut c = Tensor::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return Ok(c);
    }
    // SAFETY: the dimensions and strides above describe exactly the
    // row-major buffers of `a`, `b` and the freshly allocated `c`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok(c)
}

/// `a * b`
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NeuralError> {
    gemm(a, Layout::Normal, b, Layout::Normal)
}

/// `a^T * b`
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor, NeuralError> {
    gemm(a, Layout::Transposed, b, Layout::Normal)
}

/// `a * b^T`
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor, NeuralError> {
    gemm(a, Layout::Normal, b, Layout::Transposed)
}
