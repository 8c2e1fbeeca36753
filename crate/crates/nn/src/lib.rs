//! Minimal reverse-mode autodiff over dense `f64` tensors and the two
//! networks of the gaze target pipeline built on it.

pub mod attention;
mod conv;
pub mod error;
mod gemm;
pub mod graph;
pub mod layers;
pub mod models;
pub mod optim;
pub mod params;
pub mod resnet;
pub mod tensor;

pub use error::{NnError, Result};
pub use graph::{Gradients, Graph, Mode, Var};
pub use models::{GazeNet, GazeNetConfig, HeatmapNet, HeatmapNetConfig, HEATMAP_SIZE, INPUT_SIZE};
pub use optim::{Adam, AdamConfig};
pub use params::{Module, ParamStore};
pub use resnet::ResNetConfig;
pub use tensor::Tensor;
