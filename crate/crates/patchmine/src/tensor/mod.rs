//! Minimal dense-tensor substrate.
//!
//! Tensors are plain row-major `f64` buffers with a shape. Every operation
//! is a pure function with a fixed, documented summation order (sequential
//! over the contracted index), which is what makes the batched kernels
//! bit-reproducible against their scalar-loop oracles and independent of
//! the worker-thread partitioning.

mod format;
mod rng;

pub use format::{read_named_tensors, read_tensor, write_named_tensors, write_tensor};
pub use rng::{fnv1a64, Rng};

use crate::error::{Error, Result};
use crate::parallel;

/// Compute precision selector for kernels that offer a 32-bit mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Precision {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "f64")]
    F64,
}

/// Dense row-major tensor of 64-bit floats.
///
/// Invariants: every dimension is >= 1, `data.len()` equals the product of
/// the dimensions, and (in debug builds) operations never introduce
/// NaN/Inf from finite inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidDimensions {
                dims: shape,
                reason: "all dimension sizes must be >= 1".into(),
            });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidDimensions {
                dims: shape,
                reason: format!("shape wants {expected} values, got {}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        Tensor::new(shape, vec![0.0; len])
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Tensor::zeros(shape)?;
        let mut idx = vec![0usize; t.shape.len()];
        for flat in 0..t.data.len() {
            t.unflatten(flat, &mut idx);
            t.data[flat] = f(&idx);
        }
        Ok(t)
    }

    /// Identity matrix of side `n`.
    pub fn identity(n: usize) -> Result<Self> {
        Tensor::from_fn(vec![n, n], |ix| if ix[0] == ix[1] { 1.0 } else { 0.0 })
    }

    /// Fill with uniform samples in [-a, a) drawn in flat row-major order.
    pub fn random_uniform(shape: Vec<usize>, a: f64, rng: &mut Rng) -> Result<Self> {
        let len: usize = shape.iter().product();
        let data: Vec<f64> = (0..len).map(|_| rng.uniform_symmetric(a)).collect();
        Tensor::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
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

    fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for (dim, o) in self.shape.iter().zip(out.iter_mut()).rev() {
            *o = flat % dim;
            flat /= dim;
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0usize;
        for (i, (&ix, &dim)) in idx.iter().zip(self.shape.iter()).enumerate() {
            debug_assert!(ix < dim, "index {ix} out of bounds for axis {i} ({dim})");
            flat = flat * dim + ix;
        }
        flat
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let flat = self.flat_index(idx);
        self.data[flat] = v;
    }

    /// Reinterpret the buffer under a new shape of equal volume.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    /// Row `r` of a rank-2 tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        debug_assert_eq!(self.rank(), 2);
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn elementwise_add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "elementwise_add",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        let out = Tensor {
            shape: self.shape.clone(),
            data,
        };
        debug_assert_finite(&out, "elementwise_add");
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }
}

#[inline]
pub(crate) fn debug_assert_finite(t: &Tensor, op: &str) {
    if cfg!(debug_assertions) || cfg!(test) {
        if let Some(v) = t.data.iter().find(|v| !v.is_finite()) {
            panic!("{op}: produced non-finite value {v} from finite inputs");
        }
    }
}

/// Matrix product of `a` (m x k) and `b` (k x n).
///
/// Each output element accumulates sequentially over the contracted index
/// starting from 0.0, so the result is deterministic and identical to a
/// plain triple loop.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let m = a.shape[0];
    let n = b.shape[1];
    let mut out = vec![0.0; m * n];
    parallel::fill_rows(&mut out, n, |first_row, chunk| {
        for (r, orow) in chunk.chunks_mut(n).enumerate() {
            let arow = a.row(first_row + r);
            for (j, o) in orow.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (kk, av) in arow.iter().enumerate() {
                    acc += av * b.data[kk * n + j];
                }
                *o = acc;
            }
        }
    });
    let out = Tensor {
        shape: vec![m, n],
        data: out,
    };
    debug_assert_finite(&out, "matmul");
    Ok(out)
}

/// Numerically stable softmax over the last dimension.
///
/// Per slice: subtract the running maximum, exponentiate, accumulate the
/// normalizer sequentially, divide. Each output slice sums to 1 within
/// 1e-9 in f64.
pub fn softmax_lastdim(x: &Tensor) -> Tensor {
    let d = *x.shape.last().expect("rank >= 1");
    let mut data = x.data.clone();
    for slice in data.chunks_mut(d) {
        softmax_slice(slice);
    }
    let out = Tensor {
        shape: x.shape.clone(),
        data,
    };
    debug_assert_finite(&out, "softmax_lastdim");
    out
}

/// In-place softmax of one slice; shared by the batched kernel and the
/// scalar references so both use the identical algorithm.
pub(crate) fn softmax_slice(slice: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for &v in slice.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = 0.0;
    for v in slice.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in slice.iter_mut() {
        *v /= sum;
    }
}

/// GELU with the tanh approximation:
/// 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

/// d/dx of [`gelu`].
pub fn gelu_derivative(x: f64) -> f64 {
    let u = GELU_K * (x + GELU_C * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

/// sqrt(2/pi), the tanh-approximation slope constant.
pub const GELU_K: f64 = 0.7978845608028654;
/// Cubic coefficient of the tanh approximation.
pub const GELU_C: f64 = 0.044715;

/// Two-layer perceptron: gelu(x w1 + b1) w2 + b2, rows independent.
///
/// Biases are added after the accumulation over the contracted index
/// finishes, matching the scalar-loop references.
pub fn mlp_forward(
    x: &Tensor,
    w1: &Tensor,
    b1: &Tensor,
    w2: &Tensor,
    b2: &Tensor,
) -> Result<Tensor> {
    if x.rank() != 2 || w1.rank() != 2 || x.shape[1] != w1.shape[0] {
        return Err(Error::ShapeMismatch {
            op: "mlp_forward(x·w1)",
            left: x.shape.clone(),
            right: w1.shape.clone(),
        });
    }
    if b1.rank() != 1 || b1.shape[0] != w1.shape[1] {
        return Err(Error::ShapeMismatch {
            op: "mlp_forward(b1)",
            left: w1.shape.clone(),
            right: b1.shape.clone(),
        });
    }
    if w2.rank() != 2 || w2.shape[0] != w1.shape[1] || b2.rank() != 1 || b2.shape[0] != w2.shape[1]
    {
        return Err(Error::ShapeMismatch {
            op: "mlp_forward(w2/b2)",
            left: w2.shape.clone(),
            right: b2.shape.clone(),
        });
    }

    let hidden = matmul(x, w1)?;
    let mut hidden = hidden.into_data();
    let ch = w1.shape[1];
    for row in hidden.chunks_mut(ch) {
        for (v, b) in row.iter_mut().zip(b1.data.iter()) {
            *v = gelu(*v + b);
        }
    }
    let hidden = Tensor {
        shape: vec![x.shape[0], ch],
        data: hidden,
    };
    let mut out = matmul(&hidden, w2)?;
    let cout = w2.shape[1];
    for row in out.data.chunks_mut(cout) {
        for (v, b) in row.iter_mut().zip(b2.data.iter()) {
            *v += b;
        }
    }
    debug_assert_finite(&out, "mlp_forward");
    Ok(out)
}

/// Bilinear resize of an H x W x C image tensor using half-pixel centers
/// (the align-corners=false convention):
///
///   src_y = (dst_y + 0.5) * H / outH - 0.5, clamped sampling,
///   value = lerp(lerp(tl, tr, dx), lerp(bl, br, dx), dy),
///   lerp(a, b, t) = a + t * (b - a).
///
/// The nested-lerp form maps constant images to the identical constant
/// bit-for-bit, and resizing to the source size is exactly the identity.
pub fn bilinear_resize(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if img.rank() != 3 {
        return Err(Error::InvalidDimensions {
            dims: img.shape.clone(),
            reason: "bilinear_resize expects an H x W x C tensor".into(),
        });
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidDimensions {
            dims: vec![out_h, out_w],
            reason: "output dimensions must be >= 1".into(),
        });
    }
    let (h, w, c) = (img.shape[0], img.shape[1], img.shape[2]);
    let scale_y = h as f64 / out_h as f64;
    let scale_x = w as f64 / out_w as f64;

    let mut out = vec![0.0; out_h * out_w * c];
    let row_len = out_w * c;
    parallel::fill_rows(&mut out, row_len, |first_row, chunk| {
        for (dy, orow) in chunk.chunks_mut(row_len).enumerate() {
            let y = first_row + dy;
            let sy = (y as f64 + 0.5) * scale_y - 0.5;
            let y0 = sy.floor();
            let fy = sy - y0;
            let y0i = (y0 as isize).clamp(0, h as isize - 1) as usize;
            let y1i = (y0 as isize + 1).clamp(0, h as isize - 1) as usize;
            for x in 0..out_w {
                let sx = (x as f64 + 0.5) * scale_x - 0.5;
                let x0 = sx.floor();
                let fx = sx - x0;
                let x0i = (x0 as isize).clamp(0, w as isize - 1) as usize;
                let x1i = (x0 as isize + 1).clamp(0, w as isize - 1) as usize;
                for ch in 0..c {
                    let tl = img.data[(y0i * w + x0i) * c + ch];
                    let tr = img.data[(y0i * w + x1i) * c + ch];
                    let bl = img.data[(y1i * w + x0i) * c + ch];
                    let br = img.data[(y1i * w + x1i) * c + ch];
                    let top = tl + fx * (tr - tl);
                    let bot = bl + fx * (br - bl);
                    orow[x * c + ch] = top + fy * (bot - top);
                }
            }
        }
    });
    let out = Tensor {
        shape: vec![out_h, out_w, c],
        data: out,
    };
    debug_assert_finite(&out, "bilinear_resize");
    Ok(out)
}
