//! Patch info mining.
//!
//! Each LR token q attends over the M² HR features of its own sub-region:
//!
//!   out[q] = MLP(Q[q] + Softmax((Q[q] φQ) (K[q] φK)ᵀ) (V[q] φV))
//!
//! Scores are used unscaled (see [`ATTENTION_SCALE`]); the residual is
//! added before the MLP. The batched kernel ([`mine`]) goes through the
//! tensor ops, the oracle ([`mine_reference`]) is plain scalar loops, and
//! both accumulate sequentially over the contracted index, so their f64
//! outputs are bit-identical. [`mine_grad`] provides analytic reverse-mode
//! gradients for finite-difference verification.

use std::io::{BufRead, Write};

use crate::encoder::{FeatureGrid, VisualTokens};
use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::{
    self, gelu, gelu_derivative, matmul, read_named_tensors, softmax_lastdim, write_named_tensors,
    Rng, Tensor,
};

/// Multiplier applied to attention scores. The mining formula carries no
/// 1/sqrt(C) factor, so this is fixed at 1.
pub const ATTENTION_SCALE: f64 = 1.0;

/// Projection and MLP parameters of the mining step. The three φ maps are
/// separate unshared C x C matrices without bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MiningWeights {
    pub phi_q: Tensor,
    pub phi_k: Tensor,
    pub phi_v: Tensor,
    pub mlp_w1: Tensor,
    pub mlp_b1: Tensor,
    pub mlp_w2: Tensor,
    pub mlp_b2: Tensor,
}

impl MiningWeights {
    /// Seeded initialization with the default hidden width 4·C.
    pub fn seeded(channels: usize, seed: u64) -> Result<Self> {
        MiningWeights::seeded_with_hidden(channels, 4 * channels, seed)
    }

    pub fn seeded_with_hidden(channels: usize, hidden: usize, seed: u64) -> Result<Self> {
        if channels == 0 || hidden == 0 {
            return Err(Error::config("channels and hidden width must be >= 1"));
        }
        let c = channels;
        let scale_c = 1.0 / (c as f64).sqrt();
        let scale_h = 1.0 / (hidden as f64).sqrt();
        let draw = |label: &str, shape: Vec<usize>, a: f64| -> Result<Tensor> {
            let mut rng = Rng::derive(seed, label);
            Tensor::random_uniform(shape, a, &mut rng)
        };
        Ok(MiningWeights {
            phi_q: draw("phiQ", vec![c, c], scale_c)?,
            phi_k: draw("phiK", vec![c, c], scale_c)?,
            phi_v: draw("phiV", vec![c, c], scale_c)?,
            mlp_w1: draw("mlpW1", vec![c, hidden], scale_c)?,
            mlp_b1: draw("mlpB1", vec![hidden], 0.05)?,
            mlp_w2: draw("mlpW2", vec![hidden, c], scale_h)?,
            mlp_b2: draw("mlpB2", vec![c], 0.05)?,
        })
    }

    /// An all-identity configuration: φ maps are identity, the MLP is
    /// w1 = I, w2 = 2·I (composing to ~identity near the origin since
    /// gelu'(0) = 1/2).
    pub fn identity(channels: usize) -> Result<Self> {
        let c = channels;
        Ok(MiningWeights {
            phi_q: Tensor::identity(c)?,
            phi_k: Tensor::identity(c)?,
            phi_v: Tensor::identity(c)?,
            mlp_w1: Tensor::identity(c)?,
            mlp_b1: Tensor::zeros(vec![c])?,
            mlp_w2: Tensor::identity(c)?.scale(2.0),
            mlp_b2: Tensor::zeros(vec![c])?,
        })
    }

    pub fn channels(&self) -> usize {
        self.phi_q.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.mlp_w1.shape()[1]
    }

    fn validate(&self) -> Result<()> {
        let c = self.channels();
        let h = self.hidden();
        let ok = self.phi_q.shape() == [c, c]
            && self.phi_k.shape() == [c, c]
            && self.phi_v.shape() == [c, c]
            && self.mlp_w1.shape() == [c, h]
            && self.mlp_b1.shape() == [h]
            && self.mlp_w2.shape() == [h, c]
            && self.mlp_b2.shape() == [c];
        if !ok {
            return Err(Error::config(
                "mining weights are not consistent with a single channel width",
            ));
        }
        Ok(())
    }

    /// Keyed tensor-text dump: phiQ, phiK, phiV, mlpW1, mlpB1, mlpW2, mlpB2.
    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        write_named_tensors(
            w,
            &[
                ("phiQ", &self.phi_q),
                ("phiK", &self.phi_k),
                ("phiV", &self.phi_v),
                ("mlpW1", &self.mlp_w1),
                ("mlpB1", &self.mlp_b1),
                ("mlpW2", &self.mlp_w2),
                ("mlpB2", &self.mlp_b2),
            ],
        )
    }

    pub fn read(r: &mut impl BufRead) -> Result<Self> {
        let entries = read_named_tensors(r)?;
        let find = |key: &str| -> Result<Tensor> {
            entries
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::Format {
                    line: 0,
                    message: format!("missing weight {key}"),
                })
        };
        let w = MiningWeights {
            phi_q: find("phiQ")?,
            phi_k: find("phiK")?,
            phi_v: find("phiV")?,
            mlp_w1: find("mlpW1")?,
            mlp_b1: find("mlpB1")?,
            mlp_w2: find("mlpW2")?,
            mlp_b2: find("mlpB2")?,
        };
        w.validate()?;
        Ok(w)
    }
}

/// Ownership map from LR patches to HR grid cells: entry q lists the M²
/// flat indices (row-major over the grid) of the window owned by patch q.
#[derive(Debug, Clone, PartialEq)]
pub struct SubregionMap {
    /// LR patch-grid side.
    pub n: usize,
    /// Window side M.
    pub window: usize,
    /// Side of the grid the flat indices address.
    pub grid_side: usize,
    pub entries: Vec<Vec<usize>>,
}

/// Map patch (i, j) of an n x n grid to the M x M window at rows
/// [i·M, (i+1)·M), cols [j·M, (j+1)·M) of the n·M-sided grid, entries
/// row-major within each window.
pub fn build_subregion_map(n: usize, window: usize) -> SubregionMap {
    build_offset_subregion_map(n, window, n * window, 0, 0)
}

/// Generalized form used by the view maps: windows tile the region of
/// side n·window anchored at (row0, col0) inside a grid of `grid_side`.
pub fn build_offset_subregion_map(
    n: usize,
    window: usize,
    grid_side: usize,
    row0: usize,
    col0: usize,
) -> SubregionMap {
    assert!(n >= 1 && window >= 1);
    assert!(row0 + n * window <= grid_side && col0 + n * window <= grid_side);
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut cells = Vec::with_capacity(window * window);
            for wy in 0..window {
                for wx in 0..window {
                    let row = row0 + i * window + wy;
                    let col = col0 + j * window + wx;
                    cells.push(row * grid_side + col);
                }
            }
            entries.push(cells);
        }
    }
    SubregionMap {
        n,
        window,
        grid_side,
        entries,
    }
}

/// Gather the K and V banks ([N, M², C] each) from the grid in map order.
/// The two are identical gathers; they only diverge after the φK/φV
/// projections inside the mining step.
pub fn gather_kv(grid: &FeatureGrid, map: &SubregionMap) -> Result<(Tensor, Tensor)> {
    if map.grid_side != grid.side {
        return Err(Error::config(format!(
            "sub-region map addresses a {}-sided grid but the feature grid side is {}",
            map.grid_side, grid.side
        )));
    }
    let n = map.entries.len();
    let m2 = map.window * map.window;
    let c = grid.channels;
    let mut data = vec![0.0; n * m2 * c];
    for (q, cells) in map.entries.iter().enumerate() {
        for (m, &cell) in cells.iter().enumerate() {
            let src = &grid.data.data()[cell * c..(cell + 1) * c];
            data[(q * m2 + m) * c..(q * m2 + m + 1) * c].copy_from_slice(src);
        }
    }
    let k = Tensor::new(vec![n, m2, c], data)?;
    let v = k.clone();
    Ok((k, v))
}

fn check_mine_shapes(
    q: &VisualTokens,
    k: &Tensor,
    v: &Tensor,
    w: &MiningWeights,
) -> Result<(usize, usize, usize)> {
    w.validate()?;
    let c = w.channels();
    if q.channels != c {
        return Err(Error::ShapeMismatch {
            op: "mine(Q vs weights)",
            left: vec![q.count, q.channels],
            right: vec![c, c],
        });
    }
    if k.rank() != 3 || v.rank() != 3 || k.shape() != v.shape() {
        return Err(Error::ShapeMismatch {
            op: "mine(K vs V)",
            left: k.shape().to_vec(),
            right: v.shape().to_vec(),
        });
    }
    if k.shape()[0] != q.count || k.shape()[2] != c {
        return Err(Error::ShapeMismatch {
            op: "mine(Q vs K)",
            left: vec![q.count, q.channels],
            right: k.shape().to_vec(),
        });
    }
    Ok((q.count, k.shape()[1], c))
}

/// Batched mining over all patches. Output token count always equals the
/// query token count.
pub fn mine(q: &VisualTokens, k: &Tensor, v: &Tensor, w: &MiningWeights) -> Result<VisualTokens> {
    let (n, m2, c) = check_mine_shapes(q, k, v, w)?;

    let q_proj = matmul(&q.data, &w.phi_q)?;
    let k_proj = matmul(&k.reshape(vec![n * m2, c])?, &w.phi_k)?;
    let v_proj = matmul(&v.reshape(vec![n * m2, c])?, &w.phi_v)?;

    // Per-patch scores, softmax, and context; rows are independent.
    let mut scores = vec![0.0; n * m2];
    parallel::fill_rows(&mut scores, m2, |first, chunk| {
        for (dq, srow) in chunk.chunks_mut(m2).enumerate() {
            let qq = first + dq;
            let qrow = q_proj.row(qq);
            for (m, s) in srow.iter_mut().enumerate() {
                let krow = k_proj.row(qq * m2 + m);
                let mut acc = 0.0;
                for (a, b) in qrow.iter().zip(krow.iter()) {
                    acc += a * b;
                }
                *s = acc * ATTENTION_SCALE;
            }
        }
    });
    let attn = softmax_lastdim(&Tensor::new(vec![n, m2], scores)?);

    let mut pre = vec![0.0; n * c];
    parallel::fill_rows(&mut pre, c, |first, chunk| {
        for (dq, prow) in chunk.chunks_mut(c).enumerate() {
            let qq = first + dq;
            let arow = attn.row(qq);
            for (j, p) in prow.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (m, a) in arow.iter().enumerate() {
                    acc += a * v_proj.data()[(qq * m2 + m) * c + j];
                }
                *p = q.data.data()[qq * c + j] + acc;
            }
        }
    });

    let out = tensor::mlp_forward(
        &Tensor::new(vec![n, c], pre)?,
        &w.mlp_w1,
        &w.mlp_b1,
        &w.mlp_w2,
        &w.mlp_b2,
    )?;
    let mut tokens = VisualTokens::new(out, 1)?;
    tokens.views = q.views;
    Ok(tokens)
}

/// Attention rows (N x M², each summing to 1) for inspection and tests.
pub fn attention_rows(q: &VisualTokens, k: &Tensor, w: &MiningWeights) -> Result<Tensor> {
    let (n, m2, c) = check_mine_shapes(q, k, k, w)?;
    let q_proj = matmul(&q.data, &w.phi_q)?;
    let k_proj = matmul(&k.reshape(vec![n * m2, c])?, &w.phi_k)?;
    let mut scores = vec![0.0; n * m2];
    for qq in 0..n {
        for m in 0..m2 {
            let mut acc = 0.0;
            for j in 0..c {
                acc += q_proj.data()[qq * c + j] * k_proj.data()[(qq * m2 + m) * c + j];
            }
            scores[qq * m2 + m] = acc * ATTENTION_SCALE;
        }
    }
    Ok(softmax_lastdim(&Tensor::new(vec![n, m2], scores)?))
}

/// Ground-truth oracle: the identical contract computed with plain scalar
/// loops, no tensor ops, no batching, no threading. Accumulation order
/// matches the documented kernel order (sequential over the contracted
/// index, bias after the sum), so f64 results equal [`mine`] bit for bit.
pub fn mine_reference(
    q: &VisualTokens,
    k: &Tensor,
    v: &Tensor,
    w: &MiningWeights,
) -> Result<VisualTokens> {
    let (n, m2, c) = check_mine_shapes(q, k, v, w)?;
    let ch = w.hidden();
    let qd = q.data.data();
    let kd = k.data();
    let vd = v.data();

    let mut out = vec![0.0; n * c];
    for qq in 0..n {
        // qp = Q[qq] · φQ
        let mut qp = vec![0.0; c];
        for (j, o) in qp.iter_mut().enumerate() {
            let mut acc = 0.0;
            for kk in 0..c {
                acc += qd[qq * c + kk] * w.phi_q.data()[kk * c + j];
            }
            *o = acc;
        }
        // kp, vp: per sub-region row projections.
        let mut kp = vec![0.0; m2 * c];
        let mut vp = vec![0.0; m2 * c];
        for m in 0..m2 {
            for j in 0..c {
                let mut ak = 0.0;
                let mut av = 0.0;
                for kk in 0..c {
                    let base = (qq * m2 + m) * c + kk;
                    ak += kd[base] * w.phi_k.data()[kk * c + j];
                    av += vd[base] * w.phi_v.data()[kk * c + j];
                }
                kp[m * c + j] = ak;
                vp[m * c + j] = av;
            }
        }
        // scores and softmax.
        let mut s = vec![0.0; m2];
        for (m, sv) in s.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..c {
                acc += qp[j] * kp[m * c + j];
            }
            *sv = acc * ATTENTION_SCALE;
        }
        tensor::softmax_slice(&mut s);
        // context and residual.
        let mut pre = vec![0.0; c];
        for (j, p) in pre.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (m, sv) in s.iter().enumerate() {
                acc += sv * vp[m * c + j];
            }
            *p = qd[qq * c + j] + acc;
        }
        // MLP.
        let mut hidden = vec![0.0; ch];
        for (j, h) in hidden.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (kk, p) in pre.iter().enumerate() {
                acc += p * w.mlp_w1.data()[kk * ch + j];
            }
            *h = gelu(acc + w.mlp_b1.data()[j]);
        }
        for j in 0..c {
            let mut acc = 0.0;
            for (kk, h) in hidden.iter().enumerate() {
                acc += h * w.mlp_w2.data()[kk * c + j];
            }
            out[qq * c + j] = acc + w.mlp_b2.data()[j];
        }
    }
    let mut tokens = VisualTokens::new(Tensor::new(vec![n, c], out)?, 1)?;
    tokens.views = q.views;
    Ok(tokens)
}

/// 32-bit mode: quantize inputs and weights to f32, run the whole mining
/// computation in f32 arithmetic (same order as the references), widen the
/// result. Exists to exercise the oracle-comparison tolerances.
pub fn mine_f32(
    q: &VisualTokens,
    k: &Tensor,
    v: &Tensor,
    w: &MiningWeights,
) -> Result<VisualTokens> {
    let (n, m2, c) = check_mine_shapes(q, k, v, w)?;
    let ch = w.hidden();
    let narrow = |t: &Tensor| -> Vec<f32> { t.data().iter().map(|&x| x as f32).collect() };
    let qd = narrow(&q.data);
    let kd = narrow(k);
    let vd = narrow(v);
    let phi_q = narrow(&w.phi_q);
    let phi_k = narrow(&w.phi_k);
    let phi_v = narrow(&w.phi_v);
    let w1 = narrow(&w.mlp_w1);
    let b1 = narrow(&w.mlp_b1);
    let w2 = narrow(&w.mlp_w2);
    let b2 = narrow(&w.mlp_b2);

    let gelu32 = |x: f32| -> f32 {
        let k0 = tensor::GELU_K as f32;
        let c3 = tensor::GELU_C as f32;
        0.5 * x * (1.0 + (k0 * (x + c3 * x * x * x)).tanh())
    };

    let mut out = vec![0.0f64; n * c];
    for qq in 0..n {
        let mut qp = vec![0.0f32; c];
        for (j, o) in qp.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for kk in 0..c {
                acc += qd[qq * c + kk] * phi_q[kk * c + j];
            }
            *o = acc;
        }
        let mut kp = vec![0.0f32; m2 * c];
        let mut vp = vec![0.0f32; m2 * c];
        for m in 0..m2 {
            for j in 0..c {
                let mut ak = 0.0f32;
                let mut av = 0.0f32;
                for kk in 0..c {
                    let base = (qq * m2 + m) * c + kk;
                    ak += kd[base] * phi_k[kk * c + j];
                    av += vd[base] * phi_v[kk * c + j];
                }
                kp[m * c + j] = ak;
                vp[m * c + j] = av;
            }
        }
        let mut s = vec![0.0f32; m2];
        for (m, sv) in s.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for j in 0..c {
                acc += qp[j] * kp[m * c + j];
            }
            *sv = acc * ATTENTION_SCALE as f32;
        }
        let mut max = f32::NEG_INFINITY;
        for &sv in &s {
            if sv > max {
                max = sv;
            }
        }
        let mut sum = 0.0f32;
        for sv in s.iter_mut() {
            *sv = (*sv - max).exp();
            sum += *sv;
        }
        for sv in s.iter_mut() {
            *sv /= sum;
        }
        let mut pre = vec![0.0f32; c];
        for (j, p) in pre.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for (m, sv) in s.iter().enumerate() {
                acc += sv * vp[m * c + j];
            }
            *p = qd[qq * c + j] + acc;
        }
        let mut hidden = vec![0.0f32; ch];
        for (j, h) in hidden.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for (kk, p) in pre.iter().enumerate() {
                acc += p * w1[kk * ch + j];
            }
            *h = gelu32(acc + b1[j]);
        }
        for j in 0..c {
            let mut acc = 0.0f32;
            for (kk, h) in hidden.iter().enumerate() {
                acc += h * w2[kk * c + j];
            }
            out[qq * c + j] = (acc + b2[j]) as f64;
        }
    }
    let mut tokens = VisualTokens::new(Tensor::new(vec![n, c], out)?, 1)?;
    tokens.views = q.views;
    Ok(tokens)
}

/// Gradients of sum(upstream ⊙ mine(Q, K, V, w)) with respect to every
/// input and weight tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MiningGradients {
    pub d_q: Tensor,
    pub d_k: Tensor,
    pub d_v: Tensor,
    pub d_phi_q: Tensor,
    pub d_phi_k: Tensor,
    pub d_phi_v: Tensor,
    pub d_mlp_w1: Tensor,
    pub d_mlp_b1: Tensor,
    pub d_mlp_w2: Tensor,
    pub d_mlp_b2: Tensor,
}

/// Analytic reverse-mode gradients, scalar implementation. Verification
/// only; there is no training loop.
pub fn mine_grad(
    q: &VisualTokens,
    k: &Tensor,
    v: &Tensor,
    w: &MiningWeights,
    upstream: &Tensor,
) -> Result<MiningGradients> {
    let (n, m2, c) = check_mine_shapes(q, k, v, w)?;
    if upstream.shape() != [n, c] {
        return Err(Error::ShapeMismatch {
            op: "mine_grad(upstream)",
            left: vec![n, c],
            right: upstream.shape().to_vec(),
        });
    }
    let ch = w.hidden();
    let qd = q.data.data();
    let kd = k.data();
    let vd = v.data();

    let mut d_q = vec![0.0; n * c];
    let mut d_k = vec![0.0; n * m2 * c];
    let mut d_v = vec![0.0; n * m2 * c];
    let mut d_phi_q = vec![0.0; c * c];
    let mut d_phi_k = vec![0.0; c * c];
    let mut d_phi_v = vec![0.0; c * c];
    let mut d_w1 = vec![0.0; c * ch];
    let mut d_b1 = vec![0.0; ch];
    let mut d_w2 = vec![0.0; ch * c];
    let mut d_b2 = vec![0.0; c];

    for qq in 0..n {
        // ---- forward pass, keeping intermediates ----
        let mut qp = vec![0.0; c];
        for (j, o) in qp.iter_mut().enumerate() {
            for kk in 0..c {
                *o += qd[qq * c + kk] * w.phi_q.data()[kk * c + j];
            }
        }
        let mut kp = vec![0.0; m2 * c];
        let mut vp = vec![0.0; m2 * c];
        for m in 0..m2 {
            for j in 0..c {
                for kk in 0..c {
                    let base = (qq * m2 + m) * c + kk;
                    kp[m * c + j] += kd[base] * w.phi_k.data()[kk * c + j];
                    vp[m * c + j] += vd[base] * w.phi_v.data()[kk * c + j];
                }
            }
        }
        let mut attn = vec![0.0; m2];
        for (m, sv) in attn.iter_mut().enumerate() {
            for j in 0..c {
                *sv += qp[j] * kp[m * c + j];
            }
            *sv *= ATTENTION_SCALE;
        }
        tensor::softmax_slice(&mut attn);
        let mut pre = vec![0.0; c];
        for (j, p) in pre.iter_mut().enumerate() {
            for (m, a) in attn.iter().enumerate() {
                *p += a * vp[m * c + j];
            }
            *p += qd[qq * c + j];
        }
        let mut h_lin = vec![0.0; ch];
        for (j, h) in h_lin.iter_mut().enumerate() {
            for (kk, p) in pre.iter().enumerate() {
                *h += p * w.mlp_w1.data()[kk * ch + j];
            }
            *h += w.mlp_b1.data()[j];
        }
        let h_act: Vec<f64> = h_lin.iter().map(|&x| gelu(x)).collect();

        // ---- backward pass ----
        let u = &upstream.data()[qq * c..(qq + 1) * c];

        // out = h_act · w2 + b2
        for (j, &uj) in u.iter().enumerate() {
            d_b2[j] += uj;
        }
        let mut d_h = vec![0.0; ch];
        for kk in 0..ch {
            let mut acc = 0.0;
            for (j, &uj) in u.iter().enumerate() {
                d_w2[kk * c + j] += h_act[kk] * uj;
                acc += uj * w.mlp_w2.data()[kk * c + j];
            }
            d_h[kk] = acc * gelu_derivative(h_lin[kk]);
        }
        // h_lin = pre · w1 + b1
        let mut d_pre = vec![0.0; c];
        for (j, &dh) in d_h.iter().enumerate() {
            d_b1[j] += dh;
        }
        for kk in 0..c {
            let mut acc = 0.0;
            for (j, &dh) in d_h.iter().enumerate() {
                d_w1[kk * ch + j] += pre[kk] * dh;
                acc += dh * w.mlp_w1.data()[kk * ch + j];
            }
            d_pre[kk] = acc;
        }
        // pre = Q[qq] + Σ_m attn_m vp_m  (residual)
        for j in 0..c {
            d_q[qq * c + j] += d_pre[j];
        }
        let mut d_attn = vec![0.0; m2];
        let mut d_vp = vec![0.0; m2 * c];
        for (m, da) in d_attn.iter_mut().enumerate() {
            for j in 0..c {
                *da += d_pre[j] * vp[m * c + j];
                d_vp[m * c + j] = attn[m] * d_pre[j];
            }
        }
        // softmax backward: d_s = a ⊙ (d_a − Σ a d_a)
        let dot: f64 = attn.iter().zip(d_attn.iter()).map(|(a, d)| a * d).sum();
        let d_s: Vec<f64> = attn
            .iter()
            .zip(d_attn.iter())
            .map(|(a, d)| a * (d - dot) * ATTENTION_SCALE)
            .collect();
        // s_m = qp · kp_m
        let mut d_qp = vec![0.0; c];
        let mut d_kp = vec![0.0; m2 * c];
        for (m, &ds) in d_s.iter().enumerate() {
            for j in 0..c {
                d_qp[j] += ds * kp[m * c + j];
                d_kp[m * c + j] = ds * qp[j];
            }
        }
        // qp = Q[qq] · φQ
        for kk in 0..c {
            for j in 0..c {
                d_phi_q[kk * c + j] += qd[qq * c + kk] * d_qp[j];
                d_q[qq * c + kk] += d_qp[j] * w.phi_q.data()[kk * c + j];
            }
        }
        // kp_m = K[qq][m] · φK, vp_m = V[qq][m] · φV
        for m in 0..m2 {
            for kk in 0..c {
                let base = (qq * m2 + m) * c + kk;
                for j in 0..c {
                    d_phi_k[kk * c + j] += kd[base] * d_kp[m * c + j];
                    d_k[base] += d_kp[m * c + j] * w.phi_k.data()[kk * c + j];
                    d_phi_v[kk * c + j] += vd[base] * d_vp[m * c + j];
                    d_v[base] += d_vp[m * c + j] * w.phi_v.data()[kk * c + j];
                }
            }
        }
    }

    Ok(MiningGradients {
        d_q: Tensor::new(vec![n, c], d_q)?,
        d_k: Tensor::new(vec![n, m2, c], d_k)?,
        d_v: Tensor::new(vec![n, m2, c], d_v)?,
        d_phi_q: Tensor::new(vec![c, c], d_phi_q)?,
        d_phi_k: Tensor::new(vec![c, c], d_phi_k)?,
        d_phi_v: Tensor::new(vec![c, c], d_phi_v)?,
        d_mlp_w1: Tensor::new(vec![c, ch], d_w1)?,
        d_mlp_b1: Tensor::new(vec![ch], d_b1)?,
        d_mlp_w2: Tensor::new(vec![ch, c], d_w2)?,
        d_mlp_b2: Tensor::new(vec![c], d_b2)?,
    })
}

/// Seeded random mining instance used by the verification sweeps.
pub fn random_instance(
    n: usize,
    m2: usize,
    c: usize,
    seed: u64,
) -> Result<(VisualTokens, Tensor, Tensor, MiningWeights)> {
    let mut rng = Rng::derive(seed, "mine-instance");
    let q = VisualTokens::new(Tensor::random_uniform(vec![n, c], 0.5, &mut rng)?, 1)?;
    let k = Tensor::random_uniform(vec![n, m2, c], 0.5, &mut rng)?;
    let v = Tensor::random_uniform(vec![n, m2, c], 0.5, &mut rng)?;
    let w = MiningWeights::seeded(c, seed ^ 0xA5A5_5A5A)?;
    Ok((q, k, v, w))
}
