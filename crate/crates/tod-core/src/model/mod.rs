//! Mini decoder-only autoregressive transformer.
//!
//! Pre-norm blocks, learned position embeddings, GELU feed-forward, and an
//! output projection tied to the token embedding. All parameters live in one
//! flat buffer in a documented order, which keeps the optimizer, the
//! checkpoint format, and finite-difference checks trivial.
//!
//! The implementation is generic over `f32`/`f64`: training runs in `f32`,
//! gradient checks run in `f64` where central differences are exact enough.

mod backward;
mod forward;

pub use backward::backward_session;
pub use forward::{
    argmax_token, decode_from_state, forward, forward_branch, forward_train, greedy_decode,
    DecodeState, DropMasks, LayerTrace, LnTrace, Trace,
};

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, ScalarOperand};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};

/// Float type the model math is generic over.
pub trait Scalar:
    ndarray::LinalgScalar
    + Float
    + ScalarOperand
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64_val(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64_val(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64_val(self) -> f64 {
        self
    }
}

pub const LN_EPS: f64 = 1e-5;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_context: usize,
    pub vocab_size: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Library defaults sized for the synthetic corpus.
    pub fn default_for_vocab(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 4,
            d_model: 128,
            d_ff: 512,
            max_context: 256,
            vocab_size,
            dropout: 0.0,
        }
    }

    /// Tiny configuration used by gradient checks and fast tests.
    pub fn tiny(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 8,
            d_ff: 16,
            max_context: 32,
            vocab_size,
            dropout: 0.0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.d_ff == 0 {
            return Err(CoreError::Config("model dimensions must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(CoreError::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size == 0 {
            return Err(CoreError::Config("vocab_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CoreError::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One named parameter segment inside the flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    /// Weight decay applies to matrices only, not biases or layer-norm terms.
    pub decay: bool,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Documented parameter order: token embedding, position embedding, then per
/// layer [ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2], then
/// the final layer norm [lnf_g, lnf_b]. Matrices are row-major.
pub fn segments(cfg: &ModelConfig) -> Vec<Segment> {
    let (v, d, f, c) = (cfg.vocab_size, cfg.d_model, cfg.d_ff, cfg.max_context);
    let mut segs = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, rows: usize, cols: usize, decay: bool| {
        segs.push(Segment { name, offset, rows, cols, decay });
        offset += rows * cols;
    };
    push("tok_emb".into(), v, d, true);
    push("pos_emb".into(), c, d, true);
    for l in 0..cfg.n_layers {
        push(format!("layer{l}.ln1_g"), 1, d, false);
        push(format!("layer{l}.ln1_b"), 1, d, false);
        push(format!("layer{l}.wq"), d, d, true);
        push(format!("layer{l}.wk"), d, d, true);
        push(format!("layer{l}.wv"), d, d, true);
        push(format!("layer{l}.wo"), d, d, true);
        push(format!("layer{l}.ln2_g"), 1, d, false);
        push(format!("layer{l}.ln2_b"), 1, d, false);
        push(format!("layer{l}.w1"), d, f, true);
        push(format!("layer{l}.b1"), 1, f, false);
        push(format!("layer{l}.w2"), f, d, true);
        push(format!("layer{l}.b2"), 1, d, false);
    }
    push("lnf_g".into(), 1, d, false);
    push("lnf_b".into(), 1, d, false);
    segs
}

pub fn param_count(cfg: &ModelConfig) -> usize {
    segments(cfg).iter().map(Segment::len).sum()
}

/// Byte offsets of one layer's segments inside the flat buffer.
#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

fn layer_offsets(cfg: &ModelConfig, layer: usize) -> LayerOffsets {
    let (v, d, f, c) = (cfg.vocab_size, cfg.d_model, cfg.d_ff, cfg.max_context);
    let layer_size = 2 * d + 4 * d * d + 2 * d + d * f + f + f * d + d;
    let base = v * d + c * d + layer * layer_size;
    LayerOffsets {
        ln1_g: base,
        ln1_b: base + d,
        wq: base + 2 * d,
        wk: base + 2 * d + d * d,
        wv: base + 2 * d + 2 * d * d,
        wo: base + 2 * d + 3 * d * d,
        ln2_g: base + 2 * d + 4 * d * d,
        ln2_b: base + 3 * d + 4 * d * d,
        w1: base + 4 * d + 4 * d * d,
        b1: base + 4 * d + 4 * d * d + d * f,
        w2: base + 4 * d + 4 * d * d + d * f + f,
        b2: base + 4 * d + 4 * d * d + d * f + f + f * d,
    }
}

/// All model weights (or a same-shaped gradient buffer) in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub cfg: ModelConfig,
    pub data: Vec<F>,
}

/// Immutable per-layer views used by the forward/backward passes.
pub struct LayerViews<'a, F> {
    pub ln1_g: ArrayView1<'a, F>,
    pub ln1_b: ArrayView1<'a, F>,
    pub wq: ArrayView2<'a, F>,
    pub wk: ArrayView2<'a, F>,
    pub wv: ArrayView2<'a, F>,
    pub wo: ArrayView2<'a, F>,
    pub ln2_g: ArrayView1<'a, F>,
    pub ln2_b: ArrayView1<'a, F>,
    pub w1: ArrayView2<'a, F>,
    pub b1: ArrayView1<'a, F>,
    pub w2: ArrayView2<'a, F>,
    pub b2: ArrayView1<'a, F>,
}

impl<F: Scalar> ModelParams<F> {
    pub fn zeros(cfg: &ModelConfig) -> ModelParams<F> {
        ModelParams {
            cfg: cfg.clone(),
            data: vec![F::zero(); param_count(cfg)],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn view2(&self, offset: usize, rows: usize, cols: usize) -> ArrayView2<'_, F> {
        ArrayView2::from_shape((rows, cols), &self.data[offset..offset + rows * cols]).unwrap()
    }

    fn view1(&self, offset: usize, len: usize) -> ArrayView1<'_, F> {
        ArrayView1::from_shape(len, &self.data[offset..offset + len]).unwrap()
    }

    pub fn view2_mut(&mut self, offset: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, F> {
        ArrayViewMut2::from_shape((rows, cols), &mut self.data[offset..offset + rows * cols])
            .unwrap()
    }

    pub fn view1_mut(&mut self, offset: usize, len: usize) -> ArrayViewMut1<'_, F> {
        ArrayViewMut1::from_shape(len, &mut self.data[offset..offset + len]).unwrap()
    }

    pub fn tok_emb(&self) -> ArrayView2<'_, F> {
        self.view2(0, self.cfg.vocab_size, self.cfg.d_model)
    }

    pub fn pos_emb(&self) -> ArrayView2<'_, F> {
        let off = self.cfg.vocab_size * self.cfg.d_model;
        self.view2(off, self.cfg.max_context, self.cfg.d_model)
    }

    pub fn layer(&self, l: usize) -> LayerViews<'_, F> {
        let o = layer_offsets(&self.cfg, l);
        let (d, f) = (self.cfg.d_model, self.cfg.d_ff);
        LayerViews {
            ln1_g: self.view1(o.ln1_g, d),
            ln1_b: self.view1(o.ln1_b, d),
            wq: self.view2(o.wq, d, d),
            wk: self.view2(o.wk, d, d),
            wv: self.view2(o.wv, d, d),
            wo: self.view2(o.wo, d, d),
            ln2_g: self.view1(o.ln2_g, d),
            ln2_b: self.view1(o.ln2_b, d),
            w1: self.view2(o.w1, d, f),
            b1: self.view1(o.b1, f),
            w2: self.view2(o.w2, f, d),
            b2: self.view1(o.b2, d),
        }
    }

    pub fn final_ln(&self) -> (ArrayView1<'_, F>, ArrayView1<'_, F>) {
        let d = self.cfg.d_model;
        let off = param_count(&self.cfg) - 2 * d;
        (self.view1(off, d), self.view1(off + d, d))
    }

    pub(crate) fn layer_offs(&self, l: usize) -> LayerOffsets {
        layer_offsets(&self.cfg, l)
    }

    pub(crate) fn final_ln_offset(&self) -> usize {
        param_count(&self.cfg) - 2 * self.cfg.d_model
    }

    pub fn pos_emb_offset(&self) -> usize {
        self.cfg.vocab_size * self.cfg.d_model
    }

    pub fn zero_fill(&mut self) {
        self.data.fill(F::zero());
    }
}

/// Box-Muller standard normal draw; deterministic given the seeded rng.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Initialize parameters: N(0, 0.02) matrices, zero biases, unit ln gains.
pub fn init_params<F: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ModelParams<F>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(cfg);
    for seg in segments(cfg) {
        let is_gain = seg.name.ends_with("_g");
        let is_bias = seg.name.ends_with("_b") || seg.name.ends_with(".b1") || seg.name.ends_with(".b2");
        for i in seg.offset..seg.offset + seg.len() {
            params.data[i] = if is_gain {
                F::one()
            } else if is_bias {
                F::zero()
            } else {
                F::from_f64(normal(&mut rng) * INIT_STD)
            };
        }
    }
    Ok(params)
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic, u32 header length, JSON header, f32 LE blob in
// the order given by [`segments`].
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 8] = b"TODCKPT1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub step: usize,
    pub param_count: usize,
}

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams<f32>,
    vocab_hash: &str,
    step: usize,
) -> Result<()> {
    let meta = CheckpointMeta {
        config: params.cfg.clone(),
        vocab_hash: vocab_hash.to_string(),
        step,
        param_count: params.data.len(),
    };
    let header = serde_json::to_vec(&meta)?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(CHECKPOINT_MAGIC)?;
    file.write_all(&(header.len() as u32).to_le_bytes())?;
    file.write_all(&header)?;
    for x in &params.data {
        file.write_all(&x.to_le_bytes())?;
    }
    file.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams<f32>, CheckpointMeta)> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CoreError::Checkpoint("bad magic bytes".into()));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header = vec![0u8; header_len];
    file.read_exact(&mut header)?;
    let meta: CheckpointMeta = serde_json::from_slice(&header)?;
    let expected = param_count(&meta.config);
    if meta.param_count != expected {
        return Err(CoreError::Checkpoint(format!(
            "header says {} params, config implies {expected}",
            meta.param_count
        )));
    }
    let mut blob = vec![0u8; expected * 4];
    file.read_exact(&mut blob)?;
    let data: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((
        ModelParams {
            cfg: meta.config.clone(),
            data,
        },
        meta,
    ))
}

/// Hash of the raw little-endian parameter bytes; used by determinism checks.
pub fn params_hash(params: &ModelParams<f32>) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for x in &params.data {
        hasher.update(x.to_le_bytes());
    }
    crate::tokenizer::hex_string(&hasher.finalize())
}
