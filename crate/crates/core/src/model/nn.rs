//! Transformer building blocks over candle tensors, initialized from a seeded RNG.

use candle_core::{DType, Device, Tensor, Var, D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::ModelError;

pub type Result<T> = std::result::Result<T, ModelError>;

/// Named parameters collected while a module is initialized.
pub struct ParamInit<'a> {
    rng: &'a mut ChaCha8Rng,
    dtype: DType,
    device: &'a Device,
    prefix: Vec<String>,
    pub vars: Vec<(String, Var)>,
}

impl<'a> ParamInit<'a> {
    pub fn new(rng: &'a mut ChaCha8Rng, dtype: DType, device: &'a Device) -> Self {
        Self {
            rng,
            dtype,
            device,
            prefix: Vec::new(),
            vars: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>) {
        self.prefix.push(name.into());
    }

    pub fn pop(&mut self) {
        self.prefix.pop();
    }

    fn var(&mut self, name: &str, values: Vec<f64>, shape: &[usize]) -> Result<Var> {
        let t = Tensor::from_vec(values, shape, self.device)?.to_dtype(self.dtype)?;
        let v = Var::from_tensor(&t)?;
        let mut full = self.prefix.join(".");
        if !full.is_empty() {
            full.push('.');
        }
        full.push_str(name);
        self.vars.push((full, v.clone()));
        Ok(v)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("positive std");
        let values = (0..n).map(|_| dist.sample(self.rng)).collect();
        self.var(name, values, shape)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        self.var(name, vec![value; n], shape)
    }

    /// Glorot-uniform weights of shape `[fan_in, fan_out]`.
    pub fn glorot(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<Var> {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a).expect("valid range");
        let values = (0..fan_in * fan_out).map(|_| dist.sample(self.rng)).collect();
        self.var(name, values, &[fan_in, fan_out])
    }
}

/// Randomness and perturbation settings for one forward pass.
pub struct ForwardCtx {
    pub dropout: f64,
    pub rng: ChaCha8Rng,
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma2: f64,
    pub site: LayerSelector,
}

/// Where in the encoder noise is added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerSelector {
    /// Output of the final layer norm.
    #[default]
    Final,
    /// Output of encoder block `i` (0-based).
    Layer(usize),
}

impl std::str::FromStr for LayerSelector {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "final" | "last" => Ok(Self::Final),
            _ => s
                .parse::<usize>()
                .map(Self::Layer)
                .map_err(|_| format!("invalid layer selector {s:?}; expected `final` or a layer index")),
        }
    }
}

impl ForwardCtx {
    /// Deterministic: no dropout, no noise.
    pub fn eval() -> Self {
        Self {
            dropout: 0.0,
            rng: rand::SeedableRng::seed_from_u64(0),
            noise: None,
        }
    }

    pub fn train(dropout: f64, rng: ChaCha8Rng) -> Self {
        Self {
            dropout,
            rng,
            noise: None,
        }
    }

    pub fn with_noise(noise: NoiseSpec, rng: ChaCha8Rng) -> Self {
        Self {
            dropout: 0.0,
            rng,
            noise: Some(noise),
        }
    }

    pub fn dropout(&mut self, x: &Tensor) -> Result<Tensor> {
        let p = self.dropout;
        if p <= 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 / (1.0 - p);
        let n = x.elem_count();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
        Ok(x.mul(&mask)?)
    }

    /// Adds the configured noise if `site` is the selected one; a zero variance is a no-op.
    pub fn perturb(&mut self, x: Tensor, site: LayerSelector) -> Result<Tensor> {
        let Some(spec) = self.noise else { return Ok(x) };
        if spec.site != site || spec.sigma2 == 0.0 {
            return Ok(x);
        }
        let dist = Normal::new(0.0, spec.sigma2.sqrt()).expect("non-negative variance");
        let values: Vec<f64> = (0..x.elem_count()).map(|_| dist.sample(&mut self.rng)).collect();
        let eps = Tensor::from_vec(values, x.shape(), x.device())?.to_dtype(x.dtype())?;
        Ok((x + eps)?)
    }
}

pub struct Linear {
    w: Var,
    b: Var,
}

impl Linear {
    pub fn new(init: &mut ParamInit, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        init.push(name);
        let w = init.glorot("weight", fan_in, fan_out)?;
        let b = init.constant("bias", &[fan_out], 0.0)?;
        init.pop();
        Ok(Self { w, b })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(self.w.as_tensor())?.broadcast_add(self.b.as_tensor())?)
    }
}

pub struct LayerNorm {
    g: Var,
    b: Var,
}

impl LayerNorm {
    const EPS: f64 = 1e-5;

    pub fn new(init: &mut ParamInit, name: &str, dim: usize) -> Result<Self> {
        init.push(name);
        let g = init.constant("weight", &[dim], 1.0)?;
        let b = init.constant("bias", &[dim], 0.0)?;
        init.pop();
        Ok(Self { g, b })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + Self::EPS)?.sqrt()?)?;
        Ok(normed.broadcast_mul(self.g.as_tensor())?.broadcast_add(self.b.as_tensor())?)
    }
}

pub struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl Attention {
    pub fn new(init: &mut ParamInit, name: &str, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(ModelError::Config(format!("hidden size {dim} is not divisible by {heads} heads")));
        }
        init.push(name);
        let out = Self {
            q: Linear::new(init, "q", dim, dim)?,
            k: Linear::new(init, "k", dim, dim)?,
            v: Linear::new(init, "v", dim, dim)?,
            o: Linear::new(init, "o", dim, dim)?,
            heads,
        };
        init.pop();
        Ok(out)
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (t, d) = x.dims2()?;
        Ok(x.reshape((t, self.heads, d / self.heads))?.transpose(0, 1)?.contiguous()?)
    }

    /// `x`: `[T, d]` queries; `memory`: `[S, d]` keys/values (self-attention when `None`).
    pub fn forward(&self, x: &Tensor, memory: Option<&Tensor>, causal: bool) -> Result<Tensor> {
        let (t, d) = x.dims2()?;
        let kv = memory.unwrap_or(x);
        let s = kv.dim(0)?;
        let q = self.split_heads(&self.q.forward(x)?)?;
        let k = self.split_heads(&self.k.forward(kv)?)?;
        let v = self.split_heads(&self.v.forward(kv)?)?;
        let scale = 1.0 / ((d / self.heads) as f64).sqrt();
        let mut scores = (q.matmul(&k.transpose(1, 2)?.contiguous()?)? * scale)?;
        if causal {
            let mask: Vec<f64> = (0..t)
                .flat_map(|i| (0..s).map(move |j| if j > i { -1e9 } else { 0.0 }))
                .collect();
            let mask = Tensor::from_vec(mask, (t, s), x.device())?.to_dtype(x.dtype())?;
            scores = scores.broadcast_add(&mask)?;
        }
        let probs = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let ctx = probs.matmul(&v)?.transpose(0, 1)?.contiguous()?.reshape((t, d))?;
        self.o.forward(&ctx)
    }
}

pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new(init: &mut ParamInit, name: &str, dim: usize, inner: usize) -> Result<Self> {
        init.push(name);
        let out = Self {
            up: Linear::new(init, "up", dim, inner)?,
            down: Linear::new(init, "down", inner, dim)?,
        };
        init.pop();
        Ok(out)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.down.forward(&self.up.forward(x)?.gelu()?)
    }
}

/// Pre-norm self-attention block.
pub struct TransformerLayer {
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    ff: FeedForward,
}

impl TransformerLayer {
    pub fn new(init: &mut ParamInit, name: &str, dim: usize, heads: usize, inner: usize) -> Result<Self> {
        init.push(name);
        let out = Self {
            ln1: LayerNorm::new(init, "ln1", dim)?,
            attn: Attention::new(init, "attn", dim, heads)?,
            ln2: LayerNorm::new(init, "ln2", dim)?,
            ff: FeedForward::new(init, "ff", dim, inner)?,
        };
        init.pop();
        Ok(out)
    }

    pub fn forward(&self, x: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        let a = self.attn.forward(&self.ln1.forward(x)?, None, false)?;
        let x = (x + ctx.dropout(&a)?)?;
        let f = self.ff.forward(&self.ln2.forward(&x)?)?;
        Ok((&x + ctx.dropout(&f)?)?)
    }
}

/// Pre-norm causal self-attention, cross-attention and feed-forward block.
pub struct DecoderLayer {
    ln1: LayerNorm,
    self_attn: Attention,
    ln2: LayerNorm,
    cross_attn: Attention,
    ln3: LayerNorm,
    ff: FeedForward,
}

impl DecoderLayer {
    pub fn new(init: &mut ParamInit, name: &str, dim: usize, heads: usize, inner: usize) -> Result<Self> {
        init.push(name);
        let out = Self {
            ln1: LayerNorm::new(init, "ln1", dim)?,
            self_attn: Attention::new(init, "self_attn", dim, heads)?,
            ln2: LayerNorm::new(init, "ln2", dim)?,
            cross_attn: Attention::new(init, "cross_attn", dim, heads)?,
            ln3: LayerNorm::new(init, "ln3", dim)?,
            ff: FeedForward::new(init, "ff", dim, inner)?,
        };
        init.pop();
        Ok(out)
    }

    pub fn forward(&self, x: &Tensor, memory: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        let a = self.self_attn.forward(&self.ln1.forward(x)?, None, true)?;
        let x = (x + ctx.dropout(&a)?)?;
        let c = self.cross_attn.forward(&self.ln2.forward(&x)?, Some(memory), false)?;
        let x = (&x + ctx.dropout(&c)?)?;
        let f = self.ff.forward(&self.ln3.forward(&x)?)?;
        Ok((&x + ctx.dropout(&f)?)?)
    }
}

/// Rows `ids` of an embedding table.
pub fn embed(table: &Var, ids: &[u32]) -> Result<Tensor> {
    let idx = Tensor::new(ids, table.device())?;
    Ok(table.as_tensor().index_select(&idx, 0)?)
}
