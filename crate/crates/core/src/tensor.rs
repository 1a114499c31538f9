//! Dense row-major N-d arrays and the kernels built on them.
//!
//! Values are stored as `f64`. Every kernel accumulates in a fixed order, so a
//! given build always produces bit-identical results for identical inputs.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Reduction applied by [`Tensor::reduce`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    Max,
    /// Index of the maximum, ties broken towards the lowest index.
    ArgMax,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    /// Identity matrix of size `n`.
    pub fn eye(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            debug_assert!(i < n);
            acc * n + i
        })
    }

    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    /// Fails with [`Error::NonFinite`] if any value is NaN or infinite.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn expect_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// `self += s * other`, in place.
    pub fn axpy(&mut self, s: f64, other: &Tensor) -> Result<()> {
        self.expect_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.expect_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Sub-tensor at `index` along the leading axis.
    pub fn slice_outer(&self, index: usize) -> Result<Tensor> {
        if self.shape.is_empty() || index >= self.shape[0] {
            return Err(Error::invalid(format!(
                "outer index {index} out of range for {:?}",
                self.shape
            )));
        }
        let inner: usize = self.shape[1..].iter().product();
        Ok(Tensor {
            shape: self.shape[1..].to_vec(),
            data: self.data[index * inner..(index + 1) * inner].to_vec(),
        })
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("cannot stack zero tensors"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            first.expect_same_shape(t)?;
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Tensor::new(&shape, data)
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.ndim() != 2 || other.ndim() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::shape(format!(
                "matmul {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            MatRef::row_major(&self.data, k),
            MatRef::row_major(&other.data, n),
            &mut out,
            false,
        );
        Tensor::new(&[m, n], out)
    }

    /// Reduces one axis. The output drops that axis.
    pub fn reduce(&self, axis: usize, mode: Reduce) -> Result<Tensor> {
        if axis >= self.ndim() {
            return Err(Error::AxisOutOfRange {
                axis,
                ndim: self.ndim(),
            });
        }
        let len = self.shape[axis];
        if len == 0 {
            return Err(Error::EmptyAxis);
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| self.data[(o * len + k) * inner + i];
                let v = match mode {
                    Reduce::Sum => (0..len).map(at).sum(),
                    Reduce::Mean => (0..len).map(at).sum::<f64>() / len as f64,
                    Reduce::Max => (0..len).map(at).fold(f64::NEG_INFINITY, f64::max),
                    Reduce::ArgMax => {
                        let mut best = 0;
                        for k in 1..len {
                            if at(k) > at(best) {
                                best = k;
                            }
                        }
                        best as f64
                    }
                };
                out.push(v);
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Tensor::new(&shape, out)
    }

    /// 2-D cross-correlation (no kernel flip) with zero padding.
    ///
    /// `self` is `[C_in, H, W]`, `kernel` is `[C_out, C_in, kh, kw]`.
    pub fn conv2d(&self, kernel: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        if self.ndim() != 3 || kernel.ndim() != 4 || kernel.shape[1] != self.shape[0] {
            return Err(Error::shape(format!(
                "conv2d input {:?} kernel {:?}",
                self.shape, kernel.shape
            )));
        }
        let geom = ConvGeometry::new(
            self.shape[0],
            self.shape[1],
            self.shape[2],
            kernel.shape[2],
            kernel.shape[3],
            stride,
            pad,
        )?;
        let c_out = kernel.shape[0];
        let cols = geom.im2col(&self.data);
        let mut out = vec![0.0; c_out * geom.out_len()];
        gemm(
            c_out,
            geom.col_rows(),
            geom.out_len(),
            MatRef::row_major(&kernel.data, geom.col_rows()),
            MatRef::row_major(&cols, geom.out_len()),
            &mut out,
            false,
        );
        Tensor::new(&[c_out, geom.out_h, geom.out_w], out)
    }

    /// Unnormalized valid-mode box sum: each output is the sum of the
    /// `window_h x window_w` window whose top-left corner sits at that output
    /// position. Runs in O(HW) via an integral image.
    pub fn box_filter(&self, window_h: usize, window_w: usize) -> Result<Tensor> {
        if self.ndim() != 2 {
            return Err(Error::shape(format!(
                "box_filter needs a rank-2 image, got {:?}",
                self.shape
            )));
        }
        let (h, w) = (self.shape[0], self.shape[1]);
        if window_h == 0 || window_w == 0 || window_h > h || window_w > w {
            return Err(Error::invalid(format!(
                "window {window_h}x{window_w} does not fit image {h}x{w}"
            )));
        }
        let integral = integral_image(&self.data, h, w);
        let (oh, ow) = (h - window_h + 1, w - window_w + 1);
        let stride = w + 1;
        let mut out = Vec::with_capacity(oh * ow);
        for i in 0..oh {
            for j in 0..ow {
                let (t, b, l, r) = (i, i + window_h, j, j + window_w);
                let s =
                    integral[b * stride + r] - integral[t * stride + r] - integral[b * stride + l]
                        + integral[t * stride + l];
                out.push(s);
            }
        }
        Tensor::new(&[oh, ow], out)
    }
}

/// Summed-area table with a zero top row and left column, `(h+1) x (w+1)`.
pub fn integral_image(data: &[f64], h: usize, w: usize) -> Vec<f64> {
    let stride = w + 1;
    let mut out = vec![0.0; (h + 1) * stride];
    for i in 0..h {
        let mut row = 0.0;
        for j in 0..w {
            row += data[i * w + j];
            out[(i + 1) * stride + j + 1] = out[i * stride + j + 1] + row;
        }
    }
    out
}

/// A borrowed matrix operand with explicit strides, so transposes are free.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    data: &'a [f64],
    row_stride: isize,
    col_stride: isize,
}

impl<'a> MatRef<'a> {
    pub(crate) fn row_major(data: &'a [f64], cols: usize) -> Self {
        Self {
            data,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    /// Transposed view of a row-major matrix that has `cols` columns.
    pub(crate) fn transposed(data: &'a [f64], cols: usize) -> Self {
        Self {
            data,
            row_stride: 1,
            col_stride: cols as isize,
        }
    }
}

/// `c = a * b` (or `c += a * b` when `accumulate`), `a: m x k`, `b: k x n`,
/// `c` row-major `m x n`.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: MatRef<'_>,
    b: MatRef<'_>,
    c: &mut [f64],
    accumulate: bool,
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    let span = |r: MatRef<'_>, rows: usize, cols: usize| {
        (rows - 1) as isize * r.row_stride + (cols - 1) as isize * r.col_stride + 1
    };
    assert!(span(a, m, k) as usize <= a.data.len());
    assert!(span(b, k, n) as usize <= b.data.len());
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every element dgemm reads through the
    // given strides, and `c` holds at least m*n row-major elements.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Shape bookkeeping shared by convolution forward and backward passes.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub(crate) fn new(
        c_in: usize,
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if stride < 1 {
            return Err(Error::invalid("conv2d stride must be >= 1"));
        }
        if kh < 1 || kw < 1 || h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::shape(format!(
                "kernel {kh}x{kw} does not fit padded input {h}x{w} (pad {pad})"
            )));
        }
        Ok(Self {
            c_in,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            out_h: (h + 2 * pad - kh) / stride + 1,
            out_w: (w + 2 * pad - kw) / stride + 1,
        })
    }

    pub(crate) fn col_rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub(crate) fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Unfolds `[C_in, H, W]` into `[C_in*kh*kw, out_h*out_w]`.
    pub(crate) fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let ol = self.out_len();
        let mut cols = vec![0.0; self.col_rows() * ol];
        for c in 0..self.c_in {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * ol..(row + 1) * ol];
                    for oi in 0..self.out_h {
                        let ii = (oi * self.stride + ki) as isize - self.pad as isize;
                        if ii < 0 || ii >= self.h as isize {
                            continue;
                        }
                        let src = &input[(c * self.h + ii as usize) * self.w..];
                        for oj in 0..self.out_w {
                            let jj = (oj * self.stride + kj) as isize - self.pad as isize;
                            if jj >= 0 && jj < self.w as isize {
                                dst[oi * self.out_w + oj] = src[jj as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`im2col`](Self::im2col): scatters columns back, summing
    /// overlapping contributions into `out` (`[C_in, H, W]`).
    pub(crate) fn col2im(&self, cols: &[f64], out: &mut [f64]) {
        let ol = self.out_len();
        for c in 0..self.c_in {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * ol..(row + 1) * ol];
                    for oi in 0..self.out_h {
                        let ii = (oi * self.stride + ki) as isize - self.pad as isize;
                        if ii < 0 || ii >= self.h as isize {
                            continue;
                        }
                        let base = (c * self.h + ii as usize) * self.w;
                        for oj in 0..self.out_w {
                            let jj = (oj * self.stride + kj) as isize - self.pad as isize;
                            if jj >= 0 && jj < self.w as isize {
                                out[base + jj as usize] += src[oi * self.out_w + oj];
                            }
                        }
                    }
                }
            }
        }
    }
}
