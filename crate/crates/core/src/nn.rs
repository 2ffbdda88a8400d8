//! Dense, convolutional, and recurrent network primitives on flat `f64`
//! parameter vectors, with hand-derived exact gradients.
//!
//! All learnable state lives in a single `Vec<f64>` per network, described
//! by a [`Layout`] of named tensors. Gradients accumulate into an equally
//! shaped flat buffer, which makes three things straightforward:
//!
//! * finite-difference verification of every backward pass,
//! * bit-exact deterministic gradient accumulation across parallel workers
//!   (per-worker buffers summed in a fixed order), and
//! * checkpointing as named arrays.
//!
//! Token id 0 is reserved for padding and contributes nothing to the pooled
//! language embedding.

use std::ops::Range;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::RlError;

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

/// One named tensor inside a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Slot {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Slot {
    /// Number of scalar elements in the tensor.
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Index range of this tensor inside the flat vector.
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.numel()
    }
}

/// Ordered list of named tensors that tiles a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Layout {
    slots: Vec<Slot>,
    total: usize,
}

impl Layout {
    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// Total number of scalar parameters.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn find(&self, name: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.name == name)
    }

    /// Index range of the named tensor. Panics if the name is unknown;
    /// layouts are fixed at construction, so a miss is a programming error.
    pub fn r(&self, name: &str) -> Range<usize> {
        self.find(name)
            .unwrap_or_else(|| panic!("layout has no tensor named {name}"))
            .range()
    }
}

#[derive(Default)]
struct LayoutBuilder {
    slots: Vec<Slot>,
    total: usize,
}

impl LayoutBuilder {
    fn add(&mut self, name: &str, shape: &[usize]) {
        debug_assert!(
            self.slots.iter().all(|s| s.name != name),
            "duplicate tensor name {name}"
        );
        let numel: usize = shape.iter().product();
        self.slots.push(Slot {
            name: name.to_string(),
            offset: self.total,
            shape: shape.to_vec(),
        });
        self.total += numel;
    }

    fn build(self) -> Layout {
        Layout { slots: self.slots, total: self.total }
    }
}

/// Splits one mutable buffer into two disjoint named ranges.
fn two_mut(buf: &mut [f64], a: Range<usize>, b: Range<usize>) -> (&mut [f64], &mut [f64]) {
    assert!(a.end <= b.start || b.end <= a.start, "ranges overlap");
    if a.start < b.start {
        let (lo, hi) = buf.split_at_mut(b.start);
        let b_len = b.end - b.start;
        (&mut lo[a], &mut hi[..b_len])
    } else {
        let (lo, hi) = buf.split_at_mut(a.start);
        let a_len = a.end - a.start;
        (&mut hi[..a_len], &mut lo[b])
    }
}

// ---------------------------------------------------------------------------
// Slice kernels
// ---------------------------------------------------------------------------

/// Low-level forward/backward kernels over plain slices.
pub mod ops {
    /// y = W x, with W stored row-major as `[y.len(), x.len()]`.
    pub fn matvec(w: &[f64], x: &[f64], y: &mut [f64]) {
        let id = x.len();
        debug_assert_eq!(w.len(), y.len() * id);
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * id..(o + 1) * id];
            let mut acc = 0.0;
            for (wv, xv) in row.iter().zip(x) {
                acc += wv * xv;
            }
            *yo = acc;
        }
    }

    /// y += W x.
    pub fn matvec_acc(w: &[f64], x: &[f64], y: &mut [f64]) {
        let id = x.len();
        debug_assert_eq!(w.len(), y.len() * id);
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * id..(o + 1) * id];
            let mut acc = 0.0;
            for (wv, xv) in row.iter().zip(x) {
                acc += wv * xv;
            }
            *yo += acc;
        }
    }

    /// dx += Wᵀ dy.
    pub fn matvec_t_acc(w: &[f64], dy: &[f64], dx: &mut [f64]) {
        let id = dx.len();
        debug_assert_eq!(w.len(), dy.len() * id);
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &w[o * id..(o + 1) * id];
            for (dxi, wv) in dx.iter_mut().zip(row) {
                *dxi += wv * g;
            }
        }
    }

    /// dW += dy ⊗ x (outer product), dW row-major `[dy.len(), x.len()]`.
    pub fn outer_acc(dw: &mut [f64], dy: &[f64], x: &[f64]) {
        let id = x.len();
        debug_assert_eq!(dw.len(), dy.len() * id);
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &mut dw[o * id..(o + 1) * id];
            for (dwi, xv) in row.iter_mut().zip(x) {
                *dwi += g * xv;
            }
        }
    }

    /// dst += src, elementwise.
    pub fn add_acc(dst: &mut [f64], src: &[f64]) {
        debug_assert_eq!(dst.len(), src.len());
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }

    /// y = W x + b.
    pub fn linear(w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
        matvec(w, x, y);
        for (yo, bv) in y.iter_mut().zip(b) {
            *yo += bv;
        }
    }

    /// In-place rectified linear unit.
    pub fn relu_inplace(v: &mut [f64]) {
        for x in v {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
    }

    /// Zeroes gradient entries where the post-activation output was clipped.
    pub fn relu_bwd_mask(dy: &mut [f64], post: &[f64]) {
        debug_assert_eq!(dy.len(), post.len());
        for (d, &p) in dy.iter_mut().zip(post) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
    }

    /// Numerically stable logistic function.
    pub fn sigmoid(t: f64) -> f64 {
        if t >= 0.0 {
            1.0 / (1.0 + (-t).exp())
        } else {
            let e = t.exp();
            e / (1.0 + e)
        }
    }

    /// log softmax(z), stable under large logit magnitudes.
    pub fn log_softmax(z: &[f64]) -> Vec<f64> {
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        z.iter().map(|v| v - m - lse).collect()
    }

    /// Entropy −Σ p·ln p of a distribution given as log-probabilities.
    pub fn entropy_of_logp(logp: &[f64]) -> f64 {
        -logp.iter().map(|&lp| lp.exp() * lp).sum::<f64>()
    }

    /// Samples an index from a categorical distribution given as
    /// log-probabilities, consuming one uniform draw.
    pub fn sample_from_logp<R: rand::Rng>(logp: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut cdf = 0.0;
        for (i, &lp) in logp.iter().enumerate() {
            cdf += lp.exp();
            if u < cdf {
                return i;
            }
        }
        logp.len() - 1
    }

    /// Index of the largest entry (first one on ties).
    pub fn argmax(v: &[f64]) -> usize {
        let mut best = 0;
        for (i, &x) in v.iter().enumerate().skip(1) {
            if x > v[best] {
                best = i;
            }
        }
        best
    }

    /// Binary cross-entropy on a logit, returning `(loss, dloss/dlogit)`.
    /// Stable form: max(z,0) − z·y + ln(1 + e^(−|z|)).
    pub fn bce_with_logits(z: f64, y: f64) -> (f64, f64) {
        let loss = z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        (loss, sigmoid(z) - y)
    }

    /// Euclidean norm of a flat gradient buffer.
    pub fn global_norm(g: &[f64]) -> f64 {
        g.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Scales `g` so its global norm is at most `max_norm`; returns the
    /// pre-clip norm.
    pub fn clip_global_norm(g: &mut [f64], max_norm: f64) -> f64 {
        let norm = global_norm(g);
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            for v in g {
                *v *= k;
            }
        }
        norm
    }

    /// Shape bookkeeping for a valid (unpadded) strided convolution.
    #[derive(Clone, Copy, Debug)]
    pub struct ConvShape {
        pub c_in: usize,
        pub h_in: usize,
        pub w_in: usize,
        pub c_out: usize,
        pub k: usize,
        pub s: usize,
    }

    impl ConvShape {
        pub fn h_out(&self) -> usize {
            (self.h_in - self.k) / self.s + 1
        }
        pub fn w_out(&self) -> usize {
            (self.w_in - self.k) / self.s + 1
        }
        pub fn in_len(&self) -> usize {
            self.c_in * self.h_in * self.w_in
        }
        pub fn out_len(&self) -> usize {
            self.c_out * self.h_out() * self.w_out()
        }
        pub fn w_len(&self) -> usize {
            self.c_out * self.c_in * self.k * self.k
        }
    }

    /// y = conv(x; w) + b with channel-first storage and square kernels.
    pub fn conv2d_fwd(w: &[f64], b: &[f64], x: &[f64], sh: &ConvShape, y: &mut [f64]) {
        let (ho, wo, k, s) = (sh.h_out(), sh.w_out(), sh.k, sh.s);
        debug_assert_eq!(x.len(), sh.in_len());
        debug_assert_eq!(y.len(), sh.out_len());
        debug_assert_eq!(w.len(), sh.w_len());
        debug_assert_eq!(b.len(), sh.c_out);
        let in_plane = sh.h_in * sh.w_in;
        for oc in 0..sh.c_out {
            let w_oc = &w[oc * sh.c_in * k * k..(oc + 1) * sh.c_in * k * k];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[oc];
                    for ic in 0..sh.c_in {
                        let plane = &x[ic * in_plane..(ic + 1) * in_plane];
                        let w_ic = &w_ic_block(w_oc, ic, k);
                        for ky in 0..k {
                            let row = &plane[(oy * s + ky) * sh.w_in + ox * s..][..k];
                            let wrow = &w_ic[ky * k..(ky + 1) * k];
                            for (wv, xv) in wrow.iter().zip(row) {
                                acc += wv * xv;
                            }
                        }
                    }
                    y[oc * ho * wo + oy * wo + ox] = acc;
                }
            }
        }
    }

    fn w_ic_block(w_oc: &[f64], ic: usize, k: usize) -> &[f64] {
        &w_oc[ic * k * k..(ic + 1) * k * k]
    }

    /// Accumulates gradients of a strided convolution. `dx` is optional so
    /// the first layer can skip back-propagating into the observation.
    pub fn conv2d_bwd(
        w: &[f64],
        x: &[f64],
        dy: &[f64],
        sh: &ConvShape,
        gw: &mut [f64],
        gb: &mut [f64],
        mut dx: Option<&mut [f64]>,
    ) {
        let (ho, wo, k, s) = (sh.h_out(), sh.w_out(), sh.k, sh.s);
        let in_plane = sh.h_in * sh.w_in;
        for oc in 0..sh.c_out {
            let w_base = oc * sh.c_in * k * k;
            for oy in 0..ho {
                for ox in 0..wo {
                    let g = dy[oc * ho * wo + oy * wo + ox];
                    if g == 0.0 {
                        continue;
                    }
                    gb[oc] += g;
                    for ic in 0..sh.c_in {
                        for ky in 0..k {
                            let in_row = (oy * s + ky) * sh.w_in + ox * s;
                            for kx in 0..k {
                                let wi = w_base + ic * k * k + ky * k + kx;
                                let xi = ic * in_plane + in_row + kx;
                                gw[wi] += g * x[xi];
                                if let Some(dx) = dx.as_deref_mut() {
                                    dx[xi] += g * w[wi];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Network configuration
// ---------------------------------------------------------------------------

/// Visual front-end choice. `Conv` is the production two-stage strided
/// pipeline over channel-first RGB; `Flat` treats the observation as a raw
/// feature vector, which keeps unit tests and toy environments tiny.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderKind {
    Conv {
        in_h: usize,
        in_w: usize,
        c1: usize,
        k1: usize,
        s1: usize,
        c2: usize,
        k2: usize,
        s2: usize,
    },
    Flat { in_dim: usize },
}

impl EncoderKind {
    /// Length of the raw observation vector this encoder consumes.
    pub fn input_len(&self) -> usize {
        match *self {
            EncoderKind::Conv { in_h, in_w, .. } => 3 * in_h * in_w,
            EncoderKind::Flat { in_dim } => in_dim,
        }
    }

    fn conv_shapes(&self) -> Option<(ops::ConvShape, ops::ConvShape)> {
        match *self {
            EncoderKind::Conv { in_h, in_w, c1, k1, s1, c2, k2, s2 } => {
                let a = ops::ConvShape { c_in: 3, h_in: in_h, w_in: in_w, c_out: c1, k: k1, s: s1 };
                let b = ops::ConvShape {
                    c_in: c1,
                    h_in: a.h_out(),
                    w_in: a.w_out(),
                    c_out: c2,
                    k: k2,
                    s: s2,
                };
                Some((a, b))
            }
            EncoderKind::Flat { .. } => None,
        }
    }

    /// Length of the vector fed into the fully connected encoder stage.
    fn flat_len(&self) -> usize {
        match self.conv_shapes() {
            Some((_, b)) => b.out_len(),
            None => self.input_len(),
        }
    }
}

/// Complete architecture description for either network kind. Serialized
/// into checkpoints so a loaded file can be validated against the code
/// that consumes it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub encoder: EncoderKind,
    /// Width of the visual feature vector after the fully connected stage.
    pub enc_dim: usize,
    /// Vocabulary size for the instruction tokens (id 0 = padding).
    pub vocab: usize,
    /// Fixed token sequence length.
    pub token_len: usize,
    /// Per-token embedding width (mean-pooled over non-pad tokens).
    pub embed_dim: usize,
    /// Recurrent state width (policy) or fusion width (assessor).
    pub hidden: usize,
    /// Number of discrete actions (policy head width).
    pub n_actions: usize,
}

impl NetConfig {
    /// Production policy architecture over 64x64 RGB observations.
    pub fn policy_conv(n_actions: usize) -> Self {
        NetConfig {
            encoder: EncoderKind::Conv {
                in_h: 64,
                in_w: 64,
                c1: 16,
                k1: 8,
                s1: 8,
                c2: 32,
                k2: 3,
                s2: 2,
            },
            enc_dim: 256,
            vocab: crate::lang::VOCAB.len(),
            token_len: crate::lang::TOKEN_LEN,
            embed_dim: 32,
            hidden: 128,
            n_actions,
        }
    }

    /// Production goal-assessment architecture: a finer-grained conv
    /// pipeline than the policy, since the decision hinges on how large
    /// the target appears.
    pub fn ga_conv() -> Self {
        NetConfig {
            encoder: EncoderKind::Conv {
                in_h: 64,
                in_w: 64,
                c1: 16,
                k1: 8,
                s1: 4,
                c2: 32,
                k2: 4,
                s2: 2,
            },
            enc_dim: 256,
            vocab: crate::lang::VOCAB.len(),
            token_len: crate::lang::TOKEN_LEN,
            embed_dim: 32,
            hidden: 128,
            n_actions: 1,
        }
    }

    /// Width of the fused feature vector (visual ++ language).
    pub fn fused_dim(&self) -> usize {
        self.enc_dim + self.embed_dim
    }
}

// ---------------------------------------------------------------------------
// Shared encoder (visual branch + pooled language embedding)
// ---------------------------------------------------------------------------

/// Post-activation intermediates kept for the encoder backward pass.
/// The raw observation is not stored; callers pass it again to `*_bwd`.
#[derive(Clone, Debug, Default)]
pub struct EncCache {
    conv1: Vec<f64>,
    conv2: Vec<f64>,
}

fn encoder_layout(b: &mut LayoutBuilder, cfg: &NetConfig) {
    if let Some((s1, s2)) = cfg.encoder.conv_shapes() {
        b.add("conv1.w", &[s1.c_out, s1.c_in, s1.k, s1.k]);
        b.add("conv1.b", &[s1.c_out]);
        b.add("conv2.w", &[s2.c_out, s2.c_in, s2.k, s2.k]);
        b.add("conv2.b", &[s2.c_out]);
    }
    b.add("enc.w", &[cfg.enc_dim, cfg.encoder.flat_len()]);
    b.add("enc.b", &[cfg.enc_dim]);
    b.add("embed", &[cfg.vocab, cfg.embed_dim]);
}

/// Runs the encoder; writes the fused feature (visual ++ language) into
/// `fused` and returns the intermediates needed for the backward pass.
fn encoder_fwd(
    p: &[f64],
    l: &Layout,
    cfg: &NetConfig,
    obs: &[f64],
    tokens: &[u16],
    fused: &mut [f64],
) -> EncCache {
    debug_assert_eq!(obs.len(), cfg.encoder.input_len());
    debug_assert_eq!(fused.len(), cfg.fused_dim());
    let mut cache = EncCache::default();

    let (enc_part, lang_part) = fused.split_at_mut(cfg.enc_dim);
    if let Some((s1, s2)) = cfg.encoder.conv_shapes() {
        let mut y1 = vec![0.0; s1.out_len()];
        ops::conv2d_fwd(&p[l.r("conv1.w")], &p[l.r("conv1.b")], obs, &s1, &mut y1);
        ops::relu_inplace(&mut y1);
        let mut y2 = vec![0.0; s2.out_len()];
        ops::conv2d_fwd(&p[l.r("conv2.w")], &p[l.r("conv2.b")], &y1, &s2, &mut y2);
        ops::relu_inplace(&mut y2);
        ops::linear(&p[l.r("enc.w")], &p[l.r("enc.b")], &y2, enc_part);
        cache.conv1 = y1;
        cache.conv2 = y2;
    } else {
        ops::linear(&p[l.r("enc.w")], &p[l.r("enc.b")], obs, enc_part);
    }
    ops::relu_inplace(enc_part);

    embed_pool(&p[l.r("embed")], cfg.embed_dim, tokens, lang_part);
    cache
}

/// Accumulates encoder gradients given the gradient of the fused feature.
#[allow(clippy::too_many_arguments)]
fn encoder_bwd(
    p: &[f64],
    l: &Layout,
    cfg: &NetConfig,
    obs: &[f64],
    tokens: &[u16],
    fused_post: &[f64],
    cache: &EncCache,
    dfused: &[f64],
    grads: &mut [f64],
) {
    let mut denc = dfused[..cfg.enc_dim].to_vec();
    ops::relu_bwd_mask(&mut denc, &fused_post[..cfg.enc_dim]);

    embed_pool_bwd(&mut grads[l.r("embed")], cfg.embed_dim, tokens, &dfused[cfg.enc_dim..]);

    let flat: &[f64] = if cfg.encoder.conv_shapes().is_some() { &cache.conv2 } else { obs };
    {
        let (gw, gb) = two_mut(grads, l.r("enc.w"), l.r("enc.b"));
        ops::outer_acc(gw, &denc, flat);
        ops::add_acc(gb, &denc);
    }

    if let Some((s1, s2)) = cfg.encoder.conv_shapes() {
        let mut dy2 = vec![0.0; s2.out_len()];
        ops::matvec_t_acc(&p[l.r("enc.w")], &denc, &mut dy2);
        ops::relu_bwd_mask(&mut dy2, &cache.conv2);

        let mut dy1 = vec![0.0; s1.out_len()];
        {
            let (gw, gb) = two_mut(grads, l.r("conv2.w"), l.r("conv2.b"));
            ops::conv2d_bwd(&p[l.r("conv2.w")], &cache.conv1, &dy2, &s2, gw, gb, Some(&mut dy1));
        }
        ops::relu_bwd_mask(&mut dy1, &cache.conv1);
        {
            let (gw, gb) = two_mut(grads, l.r("conv1.w"), l.r("conv1.b"));
            // No gradient into the observation itself.
            ops::conv2d_bwd(&p[l.r("conv1.w")], obs, &dy1, &s1, gw, gb, None);
        }
    }
}

/// Mean of the embedding rows of all non-pad tokens (zeros if none).
fn embed_pool(embed: &[f64], dim: usize, tokens: &[u16], out: &mut [f64]) {
    out.fill(0.0);
    let mut count = 0usize;
    for &t in tokens {
        if t == 0 {
            continue;
        }
        let row = &embed[t as usize * dim..(t as usize + 1) * dim];
        ops::add_acc(out, row);
        count += 1;
    }
    if count > 0 {
        let inv = 1.0 / count as f64;
        for v in out {
            *v *= inv;
        }
    }
}

fn embed_pool_bwd(gembed: &mut [f64], dim: usize, tokens: &[u16], dpool: &[f64]) {
    let count = tokens.iter().filter(|&&t| t != 0).count();
    if count == 0 {
        return;
    }
    let inv = 1.0 / count as f64;
    for &t in tokens {
        if t == 0 {
            continue;
        }
        let row = &mut gembed[t as usize * dim..(t as usize + 1) * dim];
        for (g, d) in row.iter_mut().zip(dpool) {
            *g += d * inv;
        }
    }
}

// ---------------------------------------------------------------------------
// Gated recurrent unit
// ---------------------------------------------------------------------------

/// Intermediates for one recurrent step, kept for backpropagation through
/// time. Owns copies of its input and previous state so segments can be
/// replayed in any order.
#[derive(Clone, Debug)]
pub struct GruCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    /// Uₙ h_prev, cached because the candidate gate applies `r` to it.
    u: Vec<f64>,
    h: Vec<f64>,
}

fn gru_layout(b: &mut LayoutBuilder, in_dim: usize, hidden: usize) {
    for gate in ["z", "r", "n"] {
        b.add(&format!("gru.{gate}.x"), &[hidden, in_dim]);
        b.add(&format!("gru.{gate}.h"), &[hidden, hidden]);
        b.add(&format!("gru.{gate}.b"), &[hidden]);
    }
}

/// One recurrent step:
///   z = σ(Wz x + Uz h + bz)
///   r = σ(Wr x + Ur h + br)
///   n = tanh(Wn x + bn + r ⊙ (Un h))
///   h' = (1 − z) ⊙ n + z ⊙ h
fn gru_fwd(p: &[f64], l: &Layout, x: &[f64], h_prev: &[f64], hidden: usize) -> GruCache {
    let mut z = vec![0.0; hidden];
    ops::linear(&p[l.r("gru.z.x")], &p[l.r("gru.z.b")], x, &mut z);
    ops::matvec_acc(&p[l.r("gru.z.h")], h_prev, &mut z);
    for v in &mut z {
        *v = ops::sigmoid(*v);
    }

    let mut r = vec![0.0; hidden];
    ops::linear(&p[l.r("gru.r.x")], &p[l.r("gru.r.b")], x, &mut r);
    ops::matvec_acc(&p[l.r("gru.r.h")], h_prev, &mut r);
    for v in &mut r {
        *v = ops::sigmoid(*v);
    }

    let mut u = vec![0.0; hidden];
    ops::matvec(&p[l.r("gru.n.h")], h_prev, &mut u);

    let mut n = vec![0.0; hidden];
    ops::linear(&p[l.r("gru.n.x")], &p[l.r("gru.n.b")], x, &mut n);
    for i in 0..hidden {
        n[i] = (n[i] + r[i] * u[i]).tanh();
    }

    let mut h = vec![0.0; hidden];
    for i in 0..hidden {
        h[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
    }

    GruCache { x: x.to_vec(), h_prev: h_prev.to_vec(), z, r, n, u, h }
}

/// Backward pass for one recurrent step. Accumulates parameter gradients
/// into `grads` and input gradients into `dx` / `dh_prev`.
fn gru_bwd(
    p: &[f64],
    l: &Layout,
    c: &GruCache,
    dh: &[f64],
    grads: &mut [f64],
    dx: &mut [f64],
    dh_prev: &mut [f64],
) {
    let hidden = c.h.len();
    let mut da_z = vec![0.0; hidden];
    let mut da_r = vec![0.0; hidden];
    let mut da_n = vec![0.0; hidden];
    let mut du = vec![0.0; hidden];
    for i in 0..hidden {
        let dn = dh[i] * (1.0 - c.z[i]);
        let dz = dh[i] * (c.h_prev[i] - c.n[i]);
        dh_prev[i] += dh[i] * c.z[i];
        da_n[i] = dn * (1.0 - c.n[i] * c.n[i]);
        let dr = da_n[i] * c.u[i];
        du[i] = da_n[i] * c.r[i];
        da_z[i] = dz * c.z[i] * (1.0 - c.z[i]);
        da_r[i] = dr * c.r[i] * (1.0 - c.r[i]);
    }

    for (gate, da, dhh) in [("z", &da_z, &da_z), ("r", &da_r, &da_r), ("n", &da_n, &du)] {
        ops::outer_acc(&mut grads[l.r(&format!("gru.{gate}.x"))], da, &c.x);
        ops::add_acc(&mut grads[l.r(&format!("gru.{gate}.b"))], da);
        ops::outer_acc(&mut grads[l.r(&format!("gru.{gate}.h"))], dhh, &c.h_prev);
        ops::matvec_t_acc(&p[l.r(&format!("gru.{gate}.x"))], da, dx);
        ops::matvec_t_acc(&p[l.r(&format!("gru.{gate}.h"))], dhh, dh_prev);
    }
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

fn uniform_fill<R: Rng>(rng: &mut R, limit: f64, out: &mut [f64]) {
    for v in out {
        *v = rng.gen_range(-limit..limit);
    }
}

/// Glorot-style initialization keyed by tensor name. Output heads are
/// scaled down so fresh policies start near-uniform and fresh assessors
/// near probability one half.
fn init_params(layout: &Layout, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![0.0; layout.total()];
    for slot in layout.slots() {
        let out = &mut p[slot.range()];
        let name = slot.name.as_str();
        if name.ends_with(".b") {
            continue; // biases start at zero
        }
        if name == "embed" {
            uniform_fill(&mut rng, 0.1, out);
            continue;
        }
        let (fan_out, fan_in) = match slot.shape.len() {
            4 => {
                let k2 = slot.shape[2] * slot.shape[3];
                (slot.shape[0] * k2, slot.shape[1] * k2)
            }
            2 => (slot.shape[0], slot.shape[1]),
            _ => (1, slot.shape[0]),
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        uniform_fill(&mut rng, limit, out);
        if name == "pi.w" || name == "out.w" {
            for v in out {
                *v *= 0.01;
            }
        }
    }
    p
}

// ---------------------------------------------------------------------------
// Policy-value network
// ---------------------------------------------------------------------------

/// Output of one policy step.
#[derive(Clone, Debug)]
pub struct ActOut {
    pub logits: Vec<f64>,
    pub value: f64,
    pub h: Vec<f64>,
}

/// Everything needed to backpropagate one policy step, except the raw
/// observation and tokens (the caller owns those and passes them again).
#[derive(Clone, Debug)]
pub struct StepCache {
    enc: EncCache,
    gru: GruCache,
}

/// Recurrent policy-value network: visual encoder ++ pooled language
/// embedding -> gated recurrent core -> action logits and a state value.
#[derive(Clone, Debug)]
pub struct PolicyNet {
    cfg: NetConfig,
    layout: Layout,
    pub params: Vec<f64>,
}

impl PolicyNet {
    pub fn new(cfg: NetConfig, seed: u64) -> Self {
        let layout = Self::layout_for(&cfg);
        let params = init_params(&layout, seed);
        PolicyNet { cfg, layout, params }
    }

    /// Rebuilds a network around externally provided parameters
    /// (checkpoint restore).
    pub fn with_params(cfg: NetConfig, params: Vec<f64>) -> Result<Self, RlError> {
        let layout = Self::layout_for(&cfg);
        if params.len() != layout.total() {
            return Err(RlError::Shape(format!(
                "parameter vector has {} values, architecture needs {}",
                params.len(),
                layout.total()
            )));
        }
        Ok(PolicyNet { cfg, layout, params })
    }

    fn layout_for(cfg: &NetConfig) -> Layout {
        let mut b = LayoutBuilder::default();
        encoder_layout(&mut b, cfg);
        gru_layout(&mut b, cfg.fused_dim(), cfg.hidden);
        b.add("pi.w", &[cfg.n_actions, cfg.hidden]);
        b.add("pi.b", &[cfg.n_actions]);
        b.add("v.w", &[cfg.hidden]);
        b.add("v.b", &[1]);
        b.build()
    }

    pub fn cfg(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Fresh all-zero recurrent state.
    pub fn initial_hidden(&self) -> Vec<f64> {
        vec![0.0; self.cfg.hidden]
    }

    /// One step without retaining intermediates (action selection).
    pub fn act_forward(&self, obs: &[f64], tokens: &[u16], h_prev: &[f64]) -> ActOut {
        self.step(obs, tokens, h_prev).0
    }

    /// One step retaining intermediates for [`PolicyNet::backward_step`].
    pub fn train_forward(&self, obs: &[f64], tokens: &[u16], h_prev: &[f64]) -> (ActOut, StepCache) {
        self.step(obs, tokens, h_prev)
    }

    fn step(&self, obs: &[f64], tokens: &[u16], h_prev: &[f64]) -> (ActOut, StepCache) {
        let (p, l, cfg) = (&self.params, &self.layout, &self.cfg);
        let mut fused = vec![0.0; cfg.fused_dim()];
        let enc = encoder_fwd(p, l, cfg, obs, tokens, &mut fused);
        let gru = gru_fwd(p, l, &fused, h_prev, cfg.hidden);

        let mut logits = vec![0.0; cfg.n_actions];
        ops::linear(&p[l.r("pi.w")], &p[l.r("pi.b")], &gru.h, &mut logits);
        let vw = &p[l.r("v.w")];
        let value = vw.iter().zip(&gru.h).map(|(a, b)| a * b).sum::<f64>() + p[l.r("v.b")][0];
        let h = gru.h.clone();

        (ActOut { logits, value, h }, StepCache { enc, gru })
    }

    /// Backward pass for one step. `dlogits`, `dvalue`, and `dh_next` are
    /// the loss gradients flowing into this step; parameter gradients
    /// accumulate into `grads` (same layout as `params`) and the gradient
    /// w.r.t. the previous recurrent state is returned for chaining.
    #[allow(clippy::too_many_arguments)]
    pub fn backward_step(
        &self,
        grads: &mut [f64],
        obs: &[f64],
        tokens: &[u16],
        cache: &StepCache,
        dlogits: &[f64],
        dvalue: f64,
        dh_next: &[f64],
    ) -> Vec<f64> {
        let (p, l, cfg) = (&self.params, &self.layout, &self.cfg);
        debug_assert_eq!(grads.len(), self.layout.total());
        let h = &cache.gru.h;

        // Heads.
        let mut dh = dh_next.to_vec();
        {
            let (gw, gb) = two_mut(grads, l.r("pi.w"), l.r("pi.b"));
            ops::outer_acc(gw, dlogits, h);
            ops::add_acc(gb, dlogits);
        }
        ops::matvec_t_acc(&p[l.r("pi.w")], dlogits, &mut dh);
        if dvalue != 0.0 {
            let (gw, gb) = two_mut(grads, l.r("v.w"), l.r("v.b"));
            for (g, hv) in gw.iter_mut().zip(h) {
                *g += dvalue * hv;
            }
            gb[0] += dvalue;
            for (d, wv) in dh.iter_mut().zip(&p[l.r("v.w")]) {
                *d += dvalue * wv;
            }
        }

        // Recurrent core.
        let mut dx = vec![0.0; cfg.fused_dim()];
        let mut dh_prev = vec![0.0; cfg.hidden];
        gru_bwd(p, l, &cache.gru, &dh, grads, &mut dx, &mut dh_prev);

        // Encoder (the fused post-activation vector is the cached GRU input).
        encoder_bwd(p, l, cfg, obs, tokens, &cache.gru.x, &cache.enc, &dx, grads);
        dh_prev
    }
}

// ---------------------------------------------------------------------------
// Goal-assessment network
// ---------------------------------------------------------------------------

/// Intermediates for one assessor forward pass.
#[derive(Clone, Debug)]
pub struct GaCache {
    enc: EncCache,
    fused: Vec<f64>,
    fuse_out: Vec<f64>,
}

/// Feedforward binary classifier: visual encoder ++ pooled language
/// embedding -> fusion layer -> single logit ("is the instructed object
/// reached in this view?").
#[derive(Clone, Debug)]
pub struct GaNet {
    cfg: NetConfig,
    layout: Layout,
    pub params: Vec<f64>,
}

impl GaNet {
    pub fn new(cfg: NetConfig, seed: u64) -> Self {
        let layout = Self::layout_for(&cfg);
        let params = init_params(&layout, seed);
        GaNet { cfg, layout, params }
    }

    pub fn with_params(cfg: NetConfig, params: Vec<f64>) -> Result<Self, RlError> {
        let layout = Self::layout_for(&cfg);
        if params.len() != layout.total() {
            return Err(RlError::Shape(format!(
                "parameter vector has {} values, architecture needs {}",
                params.len(),
                layout.total()
            )));
        }
        Ok(GaNet { cfg, layout, params })
    }

    fn layout_for(cfg: &NetConfig) -> Layout {
        let mut b = LayoutBuilder::default();
        encoder_layout(&mut b, cfg);
        b.add("fuse.w", &[cfg.hidden, cfg.fused_dim()]);
        b.add("fuse.b", &[cfg.hidden]);
        b.add("out.w", &[cfg.hidden]);
        b.add("out.b", &[1]);
        b.build()
    }

    pub fn cfg(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Raw classification logit.
    pub fn logit(&self, obs: &[f64], tokens: &[u16]) -> f64 {
        self.forward_cached(obs, tokens).0
    }

    /// Probability that the instructed object is reached in this view.
    pub fn prob(&self, obs: &[f64], tokens: &[u16]) -> f64 {
        ops::sigmoid(self.logit(obs, tokens))
    }

    pub fn forward_cached(&self, obs: &[f64], tokens: &[u16]) -> (f64, GaCache) {
        let (p, l, cfg) = (&self.params, &self.layout, &self.cfg);
        let mut fused = vec![0.0; cfg.fused_dim()];
        let enc = encoder_fwd(p, l, cfg, obs, tokens, &mut fused);

        let mut fuse_out = vec![0.0; cfg.hidden];
        ops::linear(&p[l.r("fuse.w")], &p[l.r("fuse.b")], &fused, &mut fuse_out);
        ops::relu_inplace(&mut fuse_out);

        let ow = &p[l.r("out.w")];
        let z = ow.iter().zip(&fuse_out).map(|(a, b)| a * b).sum::<f64>() + p[l.r("out.b")][0];
        (z, GaCache { enc, fused, fuse_out })
    }

    /// Accumulates gradients for one example given dloss/dlogit.
    pub fn backward(
        &self,
        grads: &mut [f64],
        obs: &[f64],
        tokens: &[u16],
        cache: &GaCache,
        dlogit: f64,
    ) {
        let (p, l, cfg) = (&self.params, &self.layout, &self.cfg);

        let mut dfuse: Vec<f64> = p[l.r("out.w")].iter().map(|w| w * dlogit).collect();
        {
            let (gw, gb) = two_mut(grads, l.r("out.w"), l.r("out.b"));
            for (g, f) in gw.iter_mut().zip(&cache.fuse_out) {
                *g += dlogit * f;
            }
            gb[0] += dlogit;
        }
        ops::relu_bwd_mask(&mut dfuse, &cache.fuse_out);

        let mut dfused = vec![0.0; cfg.fused_dim()];
        {
            let (gw, gb) = two_mut(grads, l.r("fuse.w"), l.r("fuse.b"));
            ops::outer_acc(gw, &dfuse, &cache.fused);
            ops::add_acc(gb, &dfuse);
        }
        ops::matvec_t_acc(&p[l.r("fuse.w")], &dfuse, &mut dfused);

        encoder_bwd(p, l, cfg, obs, tokens, &cache.fused, &cache.enc, &dfused, grads);
    }
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Adam optimizer over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
