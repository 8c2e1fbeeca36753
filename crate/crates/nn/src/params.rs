//! Named parameter and buffer storage.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{NnError, Result};
use crate::graph::BufferUpdate;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Constant(f64),
    /// `U(-bound, bound)`.
    Uniform(f64),
    /// `N(0, 2 / fan_out)`, the usual choice for convolutions followed by ReLU.
    KaimingNormalFanOut,
    XavierUniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BufferSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fill: f64,
}

/// Anything that owns parameters describes them without allocating.
pub trait Module {
    fn param_specs(&self, out: &mut Vec<ParamSpec>);

    fn buffer_specs(&self, _out: &mut Vec<BufferSpec>) {}

    fn parameter_count(&self) -> usize {
        let mut specs = Vec::new();
        self.param_specs(&mut specs);
        specs.iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }
}

/// Parameters (trainable) and buffers (running statistics) keyed by
/// hierarchical dotted names.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Arc<Tensor>>,
    buffers: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocates and initializes everything `module` declares.
    pub fn initialize(&mut self, module: &dyn Module, rng: &mut impl Rng) {
        let mut specs = Vec::new();
        module.param_specs(&mut specs);
        for spec in specs {
            let t = init_tensor(&spec, rng);
            self.params.insert(spec.name, Arc::new(t));
        }
        let mut bufs = Vec::new();
        module.buffer_specs(&mut bufs);
        for b in bufs {
            self.buffers.insert(b.name, Tensor::full(b.shape, b.fill));
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|t| t.as_ref())
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub(crate) fn shared(&self, name: &str) -> Result<Arc<Tensor>> {
        self.params
            .get(name)
            .cloned()
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .map(Arc::make_mut)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.params.insert(name.into(), Arc::new(t));
    }

    pub fn buffer(&self, name: &str) -> Result<&Tensor> {
        self.buffers
            .get(name)
            .ok_or_else(|| NnError::UnknownBuffer(name.to_string()))
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, t: Tensor) {
        self.buffers.insert(name.into(), t);
    }

    /// Replaces buffers with the values recorded during a training pass.
    pub fn apply_buffer_updates(&mut self, updates: Vec<BufferUpdate>) -> Result<()> {
        for u in updates {
            let slot = self
                .buffers
                .get_mut(&u.name)
                .ok_or_else(|| NnError::UnknownBuffer(u.name.clone()))?;
            *slot = u.value;
        }
        Ok(())
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.buffers.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn num_params(&self) -> usize {
        self.params.values().map(|t| t.numel()).sum()
    }

    /// Copy of every parameter and buffer whose name starts with `prefix`.
    pub fn split_prefix(&self, prefix: &str) -> ParamStore {
        ParamStore {
            params: self
                .params
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            buffers: self
                .buffers
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Overwrites entries present in `other`; names must already exist with
    /// identical shapes.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        for (k, v) in &other.params {
            let cur = self.params.get(k).ok_or_else(|| NnError::UnknownParam(k.clone()))?;
            if cur.shape() != v.shape() {
                return Err(NnError::Shape {
                    op: "load_from",
                    detail: format!("{k}: {:?} vs {:?}", cur.shape(), v.shape()),
                });
            }
        }
        for (k, v) in &other.buffers {
            let cur = self.buffers.get(k).ok_or_else(|| NnError::UnknownBuffer(k.clone()))?;
            if cur.shape() != v.shape() {
                return Err(NnError::Shape {
                    op: "load_from",
                    detail: format!("{k}: {:?} vs {:?}", cur.shape(), v.shape()),
                });
            }
        }
        for (k, v) in &other.params {
            self.params.insert(k.clone(), v.clone());
        }
        for (k, v) in &other.buffers {
            self.buffers.insert(k.clone(), v.clone());
        }
        Ok(())
    }
}

fn init_tensor(spec: &ParamSpec, rng: &mut impl Rng) -> Tensor {
    let n: usize = spec.shape.iter().product();
    let data: Vec<f64> = match spec.init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::Constant(v) => vec![v; n],
        Init::Uniform(bound) => uniform(n, bound, rng),
        Init::KaimingNormalFanOut => {
            // weight layouts: [out, in, k, k] for conv, [out, in] for linear.
            let receptive: usize = spec.shape.iter().skip(2).product();
            let fan_out = spec.shape[0] * receptive;
            let std = (2.0 / fan_out as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            (0..n).map(|_| normal.sample(rng)).collect()
        }
        Init::XavierUniform => {
            let receptive: usize = spec.shape.iter().skip(2).product();
            let fan_out = spec.shape[0] * receptive;
            let fan_in = spec.shape.get(1).copied().unwrap_or(1) * receptive;
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            uniform(n, bound, rng)
        }
    };
    Tensor::new(spec.shape.clone(), data).expect("spec shape")
}

fn uniform(n: usize, bound: f64, rng: &mut impl Rng) -> Vec<f64> {
    if bound <= 0.0 {
        return vec![0.0; n];
    }
    let u = Uniform::new(-bound, bound).expect("valid range");
    (0..n).map(|_| u.sample(rng)).collect()
}
