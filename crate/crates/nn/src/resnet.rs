//! Bottleneck residual encoder with the ResNet-50 layout (stem, max-pool,
//! four stages of bottleneck blocks, expansion 4). Widths and block counts are
//! configurable so the same topology scales down to test-sized networks.
//! Parameter names follow the torchvision convention.

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::layers::{BatchNorm, Conv2d};
use crate::params::{BufferSpec, Module, ParamSpec, ParamStore};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResNetConfig {
    pub in_channels: usize,
    pub stem_width: usize,
    pub stage_blocks: Vec<usize>,
    pub stage_widths: Vec<usize>,
    pub expansion: usize,
}

impl ResNetConfig {
    pub fn resnet50(in_channels: usize) -> Self {
        Self {
            in_channels,
            stem_width: 64,
            stage_blocks: vec![3, 4, 6, 3],
            stage_widths: vec![64, 128, 256, 512],
            expansion: 4,
        }
    }

    /// One block per stage and narrow widths; same downsampling schedule.
    pub fn tiny(in_channels: usize) -> Self {
        Self {
            in_channels,
            stem_width: 8,
            stage_blocks: vec![1, 1, 1, 1],
            stage_widths: vec![4, 8, 8, 16],
            expansion: 4,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.stage_widths.last().copied().unwrap_or(self.stem_width) * self.expansion
    }

    /// Total downsampling factor (stem 2, pool 2, then 2 per later stage).
    pub fn output_stride(&self) -> usize {
        4 << self.stage_widths.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.stem_width == 0 || self.expansion == 0 {
            return Err(NnError::Config("resnet widths must be positive".into()));
        }
        if self.stage_blocks.is_empty() || self.stage_blocks.len() != self.stage_widths.len() {
            return Err(NnError::Config("resnet needs one block count per stage width".into()));
        }
        if self.stage_blocks.contains(&0) || self.stage_widths.contains(&0) {
            return Err(NnError::Config("resnet stages must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Bottleneck {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
    conv3: Conv2d,
    bn3: BatchNorm,
    downsample: Option<(Conv2d, BatchNorm)>,
}

impl Bottleneck {
    fn new(name: &str, in_ch: usize, width: usize, expansion: usize, stride: usize) -> Self {
        let out = width * expansion;
        let downsample = (stride != 1 || in_ch != out).then(|| {
            (
                Conv2d::new(format!("{name}.downsample.0"), in_ch, out, 1, stride, 0),
                BatchNorm::new(format!("{name}.downsample.1"), out),
            )
        });
        Self {
            conv1: Conv2d::new(format!("{name}.conv1"), in_ch, width, 1, 1, 0),
            bn1: BatchNorm::new(format!("{name}.bn1"), width),
            conv2: Conv2d::new(format!("{name}.conv2"), width, width, 3, stride, 1),
            bn2: BatchNorm::new(format!("{name}.bn2"), width),
            conv3: Conv2d::new(format!("{name}.conv3"), width, out, 1, 1, 0),
            bn3: BatchNorm::new(format!("{name}.bn3"), out),
            downsample,
        }
    }

    fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Result<Var> {
        let mut h = self.conv1.forward(g, p, x)?;
        h = self.bn1.forward(g, p, h)?;
        h = g.relu(h);
        h = self.conv2.forward(g, p, h)?;
        h = self.bn2.forward(g, p, h)?;
        h = g.relu(h);
        h = self.conv3.forward(g, p, h)?;
        h = self.bn3.forward(g, p, h)?;
        let identity = match &self.downsample {
            Some((conv, bn)) => {
                let d = conv.forward(g, p, x)?;
                bn.forward(g, p, d)?
            }
            None => x,
        };
        let sum = g.add(h, identity)?;
        Ok(g.relu(sum))
    }

    fn convs_and_norms(&self) -> Vec<(&Conv2d, &BatchNorm)> {
        let mut v = vec![(&self.conv1, &self.bn1), (&self.conv2, &self.bn2), (&self.conv3, &self.bn3)];
        if let Some((c, b)) = &self.downsample {
            v.push((c, b));
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResNet {
    pub config: ResNetConfig,
    stem: Conv2d,
    stem_bn: BatchNorm,
    blocks: Vec<Bottleneck>,
}

impl ResNet {
    pub fn new(name: &str, config: ResNetConfig) -> Result<Self> {
        config.validate()?;
        let stem = Conv2d::new(format!("{name}.conv1"), config.in_channels, config.stem_width, 7, 2, 3);
        let stem_bn = BatchNorm::new(format!("{name}.bn1"), config.stem_width);
        let mut blocks = Vec::new();
        let mut in_ch = config.stem_width;
        for (s, (&n, &width)) in config.stage_blocks.iter().zip(&config.stage_widths).enumerate() {
            for b in 0..n {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                let block_name = format!("{name}.layer{}.{b}", s + 1);
                blocks.push(Bottleneck::new(&block_name, in_ch, width, config.expansion, stride));
                in_ch = width * config.expansion;
            }
        }
        Ok(Self {
            config,
            stem,
            stem_bn,
            blocks,
        })
    }

    /// `[N, in_channels, H, W] -> [N, out_channels, H/32, W/32]` for the
    /// four-stage layout.
    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Result<Var> {
        self.forward_parts(g, p, &[x])
    }

    /// Same as [`forward`](Self::forward) with the input given as channel
    /// groups in order. The stem convolution is evaluated per group against
    /// the matching slice of its weight, so groups without a gradient cost no
    /// input-gradient work.
    pub fn forward_parts(&self, g: &mut Graph, p: &ParamStore, parts: &[Var]) -> Result<Var> {
        let mut h = match parts {
            [x] => self.stem.forward(g, p, *x)?,
            _ => {
                let w = g.param(p, &self.stem_weight_name())?;
                let mut acc: Option<Var> = None;
                let mut offset = 0;
                for &part in parts {
                    let c = g.shape(part).get(1).copied().unwrap_or(0);
                    let wp = g.narrow(w, 1, offset, c)?;
                    offset += c;
                    let y = g.conv2d(part, wp, None, self.stem.stride, self.stem.pad)?;
                    acc = Some(match acc {
                        Some(a) => g.add(a, y)?,
                        None => y,
                    });
                }
                if offset != self.config.in_channels {
                    return Err(NnError::Shape {
                        op: "resnet_stem",
                        detail: format!("{offset} input channels, expected {}", self.config.in_channels),
                    });
                }
                acc.ok_or_else(|| NnError::Shape { op: "resnet_stem", detail: "no input".into() })?
            }
        };
        h = self.stem_bn.forward(g, p, h)?;
        h = g.relu(h);
        h = g.max_pool2d(h, 3, 2, 1)?;
        for block in &self.blocks {
            h = block.forward(g, p, h)?;
        }
        Ok(h)
    }

    /// Name of the first convolution weight (the only input-width dependent
    /// tensor).
    pub fn stem_weight_name(&self) -> String {
        format!("{}.weight", self.stem.name)
    }
}

impl Module for ResNet {
    fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        self.stem.param_specs(out);
        self.stem_bn.param_specs(out);
        for b in &self.blocks {
            for (c, n) in b.convs_and_norms() {
                c.param_specs(out);
                n.param_specs(out);
            }
        }
    }

    fn buffer_specs(&self, out: &mut Vec<BufferSpec>) {
        self.stem_bn.buffer_specs(out);
        for b in &self.blocks {
            for (_, n) in b.convs_and_norms() {
                n.buffer_specs(out);
            }
        }
    }
}
