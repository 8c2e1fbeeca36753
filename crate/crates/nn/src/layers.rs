//! Parameterized building blocks. Each layer is a name plus shape metadata;
//! its tensors live in a [`ParamStore`].

use crate::error::Result;
use crate::graph::{Graph, Mode, Var};
use crate::params::{BufferSpec, Init, Module, ParamSpec, ParamStore};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LN_EPS: f64 = 1e-5;

fn spec(name: &str, suffix: &str, shape: Vec<usize>, init: Init) -> ParamSpec {
    ParamSpec {
        name: format!("{name}.{suffix}"),
        shape,
        init,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, in_dim: usize, out_dim: usize) -> Self {
        Self {
            name: name.into(),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(p, &format!("{}.weight", self.name))?;
        let b = g.param(p, &format!("{}.bias", self.name))?;
        g.linear(x, w, Some(b))
    }
}

impl Module for Linear {
    fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        let bound = 1.0 / (self.in_dim as f64).sqrt();
        out.push(spec(&self.name, "weight", vec![self.out_dim, self.in_dim], Init::Uniform(bound)));
        out.push(spec(&self.name, "bias", vec![self.out_dim], Init::Uniform(bound)));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub bias: bool,
}

impl Conv2d {
    pub fn new(name: impl Into<String>, in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            name: name.into(),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            bias: false,
        }
    }

    pub fn with_bias(mut self) -> Self {
        self.bias = true;
        self
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(p, &format!("{}.weight", self.name))?;
        let b = if self.bias {
            Some(g.param(p, &format!("{}.bias", self.name))?)
        } else {
            None
        };
        g.conv2d(x, w, b, self.stride, self.pad)
    }
}

impl Module for Conv2d {
    fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        let k = self.kernel;
        out.push(spec(&self.name, "weight", vec![self.out_ch, self.in_ch, k, k], Init::KaimingNormalFanOut));
        if self.bias {
            out.push(spec(&self.name, "bias", vec![self.out_ch], Init::Zeros));
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose2d {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub bias: bool,
    pub bias_init: Init,
}

impl ConvTranspose2d {
    pub fn new(name: impl Into<String>, in_ch: usize, out_ch: usize, kernel: usize, stride: usize, bias: bool) -> Self {
        Self {
            name: name.into(),
            in_ch,
            out_ch,
            kernel,
            stride,
            bias,
            bias_init: Init::Zeros,
        }
    }

    pub fn with_bias_init(mut self, init: Init) -> Self {
        self.bias_init = init;
        self
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(p, &format!("{}.weight", self.name))?;
        let b = if self.bias {
            Some(g.param(p, &format!("{}.bias", self.name))?)
        } else {
            None
        };
        g.conv_transpose2d(x, w, b, self.stride, 0, 0)
    }
}

impl Module for ConvTranspose2d {
    fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        let k = self.kernel;
        // stored [in, out, k, k]; fan-out for the ReLU gain is in * k * k
        out.push(ParamSpec {
            name: format!("{}.weight", self.name),
            shape: vec![self.in_ch, self.out_ch, k, k],
            init: Init::KaimingNormalFanOut,
        });
        if self.bias {
            out.push(spec(&self.name, "bias", vec![self.out_ch], self.bias_init));
        }
    }
}

/// Batch normalization with running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub name: String,
    pub channels: usize,
}

impl BatchNorm {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self {
            name: name.into(),
            channels,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Result<Var> {
        let gamma = g.param(p, &format!("{}.weight", self.name))?;
        let beta = g.param(p, &format!("{}.bias", self.name))?;
        let mean_name = format!("{}.running_mean", self.name);
        let var_name = format!("{}.running_var", self.name);
        let rm = p.buffer(&mean_name)?;
        let rv = p.buffer(&var_name)?;
        match g.mode() {
            Mode::Eval => Ok(g.batch_norm(x, gamma, beta, Some((rm, rv)), BN_EPS)?.0),
            Mode::Train => {
                let (y, stats) = g.batch_norm(x, gamma, beta, None, BN_EPS)?;
                if let Some((mean, var)) = stats {
                    let blend = |old: &Tensor, new: &Tensor| {
                        let data = old
                            .data()
                            .iter()
                            .zip(new.data())
                            .map(|(o, n)| (1.0 - BN_MOMENTUM) * o + BN_MOMENTUM * n)
                            .collect();
                        Tensor::new(old.shape().to_vec(), data).expect("same shape")
                    };
                    let (new_mean, new_var) = (blend(rm, &mean), blend(rv, &var));
                    g.push_buffer_update(mean_name, new_mean);
                    g.push_buffer_update(var_name, new_var);
                }
                Ok(y)
            }
        }
    }
}

impl Module for BatchNorm {
    fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        out.push(spec(&self.name, "weight", vec![self.channels], Init::Ones));
        out.push(spec(&self.name, "bias", vec![self.channels], Init::Zeros));
    }

    fn buffer_specs(&self, out: &mut Vec<BufferSpec>) {
        out.push(BufferSpec {
            name: format!("{}.running_mean", self.name),
            shape: vec![self.channels],
            fill: 0.0,
        });
        out.push(BufferSpec {
            name: format!("{}.running_var", self.name),
            shape: vec![self.channels],
            fill: 1.0,
        });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub name: String,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self { name: name.into(), dim }
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Result<Var> {
        let gamma = g.param(p, &format!("{}.weight", self.name))?;
        let beta = g.param(p, &format!("{}.bias", self.name))?;
        g.layer_norm(x, gamma, beta, LN_EPS)
    }
}

impl Module for LayerNorm {
    fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        out.push(spec(&self.name, "weight", vec![self.dim], Init::Ones));
        out.push(spec(&self.name, "bias", vec![self.dim], Init::Zeros));
    }
}

/// Stack of linear layers, each followed by ReLU and (optionally) dropout.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub dropout: f64,
}

impl Mlp {
    pub fn new(name: &str, in_dim: usize, dims: &[usize], dropout: f64) -> Self {
        let mut layers = Vec::with_capacity(dims.len());
        let mut prev = in_dim;
        for (i, &d) in dims.iter().enumerate() {
            layers.push(Linear::new(format!("{name}.{i}"), prev, d));
            prev = d;
        }
        Self { layers, dropout }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, mut x: Var) -> Result<Var> {
        for layer in &self.layers {
            x = layer.forward(g, p, x)?;
            x = g.relu(x);
            x = g.dropout(x, self.dropout);
        }
        Ok(x)
    }
}

impl Module for Mlp {
    fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        for l in &self.layers {
            l.param_specs(out);
        }
    }
}
