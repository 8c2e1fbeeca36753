//! Post-norm transformer encoder layer (multi-head self-attention followed
//! by a ReLU feed-forward block, each wrapped in residual + layer norm).

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::layers::{LayerNorm, Linear};
use crate::params::{Init, Module, ParamSpec, ParamStore};

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer {
    pub name: String,
    pub dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    out_proj: Linear,
    linear1: Linear,
    linear2: Linear,
    norm1: LayerNorm,
    norm2: LayerNorm,
}

/// Result of one encoder pass.
pub struct EncoderOutput {
    /// `[N, T, dim]`.
    pub tokens: Var,
    /// Attention probabilities `[N * heads, T, T]`.
    pub attention: Var,
}

impl EncoderLayer {
    pub fn new(name: &str, dim: usize, heads: usize, ff_dim: usize, dropout: f64) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(NnError::Config(format!("attention dim {dim} not divisible by {heads} heads")));
        }
        Ok(Self {
            name: name.to_string(),
            dim,
            heads,
            ff_dim,
            dropout,
            out_proj: Linear::new(format!("{name}.self_attn.out_proj"), dim, dim),
            linear1: Linear::new(format!("{name}.linear1"), dim, ff_dim),
            linear2: Linear::new(format!("{name}.linear2"), ff_dim, dim),
            norm1: LayerNorm::new(format!("{name}.norm1"), dim),
            norm2: LayerNorm::new(format!("{name}.norm2"), dim),
        })
    }

    /// `x` is `[N, T, dim]`. No positional encoding is added.
    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Result<EncoderOutput> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != self.dim {
            return Err(NnError::Shape {
                op: "encoder_layer",
                detail: format!("expected [N, T, {}], got {shape:?}", self.dim),
            });
        }
        let (n, t, d) = (shape[0], shape[1], self.dim);
        let (h, dh) = (self.heads, self.dim / self.heads);

        let w = g.param(p, &format!("{}.self_attn.in_proj_weight", self.name))?;
        let b = g.param(p, &format!("{}.self_attn.in_proj_bias", self.name))?;
        let qkv = g.linear(x, w, Some(b))?;
        let split = |g: &mut Graph, i: usize| -> Result<Var> {
            let part = g.narrow(qkv, 2, i * d, d)?;
            let part = g.reshape(part, &[n, t, h, dh])?;
            let part = g.permute(part, &[0, 2, 1, 3])?;
            g.reshape(part, &[n * h, t, dh])
        };
        let q = split(g, 0)?;
        let k = split(g, 1)?;
        let v = split(g, 2)?;
        let scores = g.batch_matmul(q, k, true)?;
        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
        let attention = g.softmax(scores);
        let ctx = g.batch_matmul(attention, v, false)?;
        let ctx = g.reshape(ctx, &[n, h, t, dh])?;
        let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = g.reshape(ctx, &[n, t, d])?;
        let attn_out = self.out_proj.forward(g, p, ctx)?;
        let attn_out = g.dropout(attn_out, self.dropout);
        let x1 = g.add(x, attn_out)?;
        let x1 = self.norm1.forward(g, p, x1)?;

        let ff = self.linear1.forward(g, p, x1)?;
        let ff = g.relu(ff);
        let ff = g.dropout(ff, self.dropout);
        let ff = self.linear2.forward(g, p, ff)?;
        let ff = g.dropout(ff, self.dropout);
        let x2 = g.add(x1, ff)?;
        let tokens = self.norm2.forward(g, p, x2)?;
        Ok(EncoderOutput { tokens, attention })
    }
}

impl Module for EncoderLayer {
    fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        out.push(ParamSpec {
            name: format!("{}.self_attn.in_proj_weight", self.name),
            shape: vec![3 * self.dim, self.dim],
            init: Init::XavierUniform,
        });
        out.push(ParamSpec {
            name: format!("{}.self_attn.in_proj_bias", self.name),
            shape: vec![3 * self.dim],
            init: Init::Zeros,
        });
        self.out_proj.param_specs(out);
        self.linear1.param_specs(out);
        self.linear2.param_specs(out);
        self.norm1.param_specs(out);
        self.norm2.param_specs(out);
    }
}
