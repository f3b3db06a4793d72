use crate::error::{Error, Result};

/// Dense activation block stored channel-major: `[channels, batch, height, width]`.
///
/// Keeping channels outermost turns every convolution into one matrix
/// product over the whole batch and makes per-channel normalization
/// statistics contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, batch: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            batch,
            height,
            width,
            data: vec![0.0; channels * batch * height * width],
        }
    }

    /// Stack per-sample `[3, h, w]` images (channel-planar) into one block.
    pub fn from_samples(samples: &[Vec<f64>], channels: usize, height: usize, width: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let plane = height * width;
        let mut t = Tensor::zeros(channels, samples.len(), height, width);
        for (n, s) in samples.iter().enumerate() {
            if s.len() != channels * plane {
                return Err(Error::Shape(format!(
                    "sample {n} has {} values, expected {}",
                    s.len(),
                    channels * plane
                )));
            }
            for c in 0..channels {
                let dst = (c * samples.len() + n) * plane;
                t.data[dst..dst + plane].copy_from_slice(&s[c * plane..(c + 1) * plane]);
            }
        }
        Ok(t)
    }

    /// Concatenate two blocks along the batch axis.
    pub fn concat_batch(a: &Tensor, b: &Tensor) -> Result<Self> {
        if (a.channels, a.height, a.width) != (b.channels, b.height, b.width) {
            return Err(Error::Shape("cannot concatenate tensors of different sample shape".into()));
        }
        let plane = a.height * a.width;
        let mut t = Tensor::zeros(a.channels, a.batch + b.batch, a.height, a.width);
        for c in 0..a.channels {
            let dst = c * t.batch * plane;
            let sa = &a.data[c * a.batch * plane..(c + 1) * a.batch * plane];
            let sb = &b.data[c * b.batch * plane..(c + 1) * b.batch * plane];
            t.data[dst..dst + sa.len()].copy_from_slice(sa);
            t.data[dst + sa.len()..dst + sa.len() + sb.len()].copy_from_slice(sb);
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Row-major matrix, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Horizontal concatenation `[a | b]`.
    pub fn hcat(a: &Matrix, b: &Matrix) -> Result<Self> {
        if a.rows != b.rows {
            return Err(Error::Shape(format!(
                "row counts differ: {} vs {}",
                a.rows, b.rows
            )));
        }
        let mut m = Matrix::zeros(a.rows, a.cols + b.cols);
        for r in 0..a.rows {
            let row = m.row_mut(r);
            row[..a.cols].copy_from_slice(a.row(r));
            row[a.cols..].copy_from_slice(b.row(r));
        }
        Ok(m)
    }

    /// Split columns `[0, at)` and `[at, cols)`.
    /// Stack rows of `a` above rows of `b`.
    pub fn vcat(a: &Matrix, b: &Matrix) -> Result<Self> {
        if a.cols != b.cols {
            return Err(Error::Shape(format!("vcat of {} and {} columns", a.cols, b.cols)));
        }
        let mut data = a.data.clone();
        data.extend_from_slice(&b.data);
        Ok(Matrix { rows: a.rows + b.rows, cols: a.cols, data })
    }

    pub fn hsplit(&self, at: usize) -> (Matrix, Matrix) {
        let mut left = Matrix::zeros(self.rows, at);
        let mut right = Matrix::zeros(self.rows, self.cols - at);
        for r in 0..self.rows {
            left.row_mut(r).copy_from_slice(&self.row(r)[..at]);
            right.row_mut(r).copy_from_slice(&self.row(r)[at..]);
        }
        (left, right)
    }

    /// Rows `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` on row-major buffers, with
/// transposition expressed through strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths are checked above against the stated dimensions
    // and strides, so every access stays in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], at: bool, b: &[f64], bt: bool) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    let av = if at { a[p * m + i] } else { a[i * k + p] };
                    let bv = if bt { b[j * k + p] } else { b[p * n + j] };
                    s += av * bv;
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_for_all_transpositions() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        for &(at, bt) in &[(false, false), (true, false), (false, true), (true, true)] {
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, &a, at, &b, bt, 0.0, &mut c);
            let want = naive(m, k, n, &a, at, &b, bt);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn from_samples_is_channel_major() {
        let s0 = vec![1.0, 2.0, 3.0, 4.0];
        let s1 = vec![5.0, 6.0, 7.0, 8.0];
        let t = Tensor::from_samples(&[s0, s1], 2, 1, 2).unwrap();
        assert_eq!(t.data, vec![1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0]);
    }
}
