//! Encoder, masked-LM head, bridge and decoder.

use candle_core::{Tensor, Var};

use super::nn::{embed, DecoderLayer, ForwardCtx, LayerNorm, LayerSelector, Linear, ParamInit, Result, TransformerLayer};
use super::ModelError;

pub struct Encoder {
    pub tok_emb: Var,
    pos_emb: Var,
    layers: Vec<TransformerLayer>,
    ln_f: LayerNorm,
    max_len: usize,
}

impl Encoder {
    pub fn new(
        init: &mut ParamInit,
        vocab: usize,
        hidden: usize,
        heads: usize,
        ffn: usize,
        layers: usize,
        max_len: usize,
    ) -> Result<Self> {
        let tok_emb = init.normal("tok_emb", &[vocab, hidden], 1.0)?;
        let pos_emb = init.normal("pos_emb", &[max_len, hidden], 0.1)?;
        let layers = (0..layers)
            .map(|i| TransformerLayer::new(init, &format!("layers.{i}"), hidden, heads, ffn))
            .collect::<Result<_>>()?;
        let ln_f = LayerNorm::new(init, "ln_f", hidden)?;
        Ok(Self {
            tok_emb,
            pos_emb,
            layers,
            ln_f,
            max_len,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn check_selector(&self, site: LayerSelector) -> Result<()> {
        match site {
            LayerSelector::Layer(i) if i >= self.layers.len() => Err(ModelError::InvalidLayer {
                index: i,
                layers: self.layers.len(),
            }),
            _ => Ok(()),
        }
    }

    pub fn token_embeddings(&self, ids: &[u32]) -> Result<Tensor> {
        embed(&self.tok_emb, ids)
    }

    /// `H_last` from already-looked-up token embeddings `[T, hidden]`.
    pub fn forward_embeddings(&self, tok: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        let t = tok.dim(0)?;
        if t > self.max_len {
            return Err(ModelError::TooLong {
                needed: t,
                max_len: self.max_len,
            });
        }
        let pos = self.pos_emb.as_tensor().narrow(0, 0, t)?;
        let mut x = ctx.dropout(&(tok + pos)?)?;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x, ctx)?;
            x = ctx.perturb(x, LayerSelector::Layer(i))?;
        }
        let x = self.ln_f.forward(&x)?;
        ctx.perturb(x, LayerSelector::Final)
    }

    pub fn forward(&self, ids: &[u32], ctx: &mut ForwardCtx) -> Result<Tensor> {
        self.forward_embeddings(&self.token_embeddings(ids)?, ctx)
    }
}

/// Masked-LM head; the parameters used only by classification.
pub struct MlmHead {
    dense: Linear,
    ln: LayerNorm,
    out: Linear,
}

impl MlmHead {
    pub fn new(init: &mut ParamInit, hidden: usize, vocab: usize) -> Result<Self> {
        Ok(Self {
            dense: Linear::new(init, "dense", hidden, hidden)?,
            ln: LayerNorm::new(init, "ln", hidden)?,
            out: Linear::new(init, "out", hidden, vocab)?,
        })
    }

    /// Vocabulary logits for rows `h` `[N, hidden]`.
    pub fn forward(&self, h: &Tensor) -> Result<Tensor> {
        self.out.forward(&self.ln.forward(&self.dense.forward(h)?.gelu()?)?)
    }
}

/// Randomly initialized transformer layers between encoder and decoder.
pub struct Bridge {
    layers: Vec<TransformerLayer>,
    proj: Option<Linear>,
    hidden: usize,
}

impl Bridge {
    pub fn new(
        init: &mut ParamInit,
        hidden: usize,
        heads: usize,
        ffn: usize,
        layers: usize,
        out_dim: usize,
    ) -> Result<Self> {
        let layers = (0..layers)
            .map(|i| TransformerLayer::new(init, &format!("layers.{i}"), hidden, heads, ffn))
            .collect::<Result<_>>()?;
        let proj = (out_dim != hidden)
            .then(|| Linear::new(init, "proj", hidden, out_dim))
            .transpose()?;
        Ok(Self { layers, proj, hidden })
    }

    pub fn forward(&self, h: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        let dims = h.dims().to_vec();
        if dims.len() != 2 || dims[1] != self.hidden {
            return Err(ModelError::Shape {
                expected: vec![dims.first().copied().unwrap_or(0), self.hidden],
                got: dims,
            });
        }
        let mut x = h.clone();
        for layer in &self.layers {
            x = layer.forward(&x, ctx)?;
        }
        match &self.proj {
            Some(p) => p.forward(&x),
            None => Ok(x),
        }
    }
}

pub struct Decoder {
    emb: Var,
    pos_emb: Var,
    layers: Vec<DecoderLayer>,
    ln_f: LayerNorm,
    lm_head: Linear,
    max_len: usize,
}

impl Decoder {
    pub fn new(
        init: &mut ParamInit,
        vocab: usize,
        dim: usize,
        heads: usize,
        ffn: usize,
        layers: usize,
        max_len: usize,
    ) -> Result<Self> {
        let emb = init.normal("emb", &[vocab, dim], 1.0)?;
        let pos_emb = init.normal("pos_emb", &[max_len, dim], 0.1)?;
        let layers = (0..layers)
            .map(|i| DecoderLayer::new(init, &format!("layers.{i}"), dim, heads, ffn))
            .collect::<Result<_>>()?;
        let ln_f = LayerNorm::new(init, "ln_f", dim)?;
        let lm_head = Linear::new(init, "lm_head", dim, vocab)?;
        Ok(Self {
            emb,
            pos_emb,
            layers,
            ln_f,
            lm_head,
            max_len,
        })
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Next-token logits `[T, vocab]` for every prefix of `ids`.
    pub fn forward(&self, ids: &[u32], memory: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        let t = ids.len();
        if t > self.max_len {
            return Err(ModelError::TooLong {
                needed: t,
                max_len: self.max_len,
            });
        }
        let pos = self.pos_emb.as_tensor().narrow(0, 0, t)?;
        let mut x = ctx.dropout(&(embed(&self.emb, ids)? + pos)?)?;
        for layer in &self.layers {
            x = layer.forward(&x, memory, ctx)?;
        }
        self.lm_head.forward(&self.ln_f.forward(&x)?)
    }
}

