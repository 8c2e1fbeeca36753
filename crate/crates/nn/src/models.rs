//! The two learned networks of the pipeline.
//!
//! [`GazeNet`] maps a normalized pose and a depth map to a unit gaze
//! direction: pose MLP and residual depth encoder produce one token each, a
//! transformer encoder layer mixes the two tokens, and a two-layer head
//! regresses the direction.
//!
//! [`HeatmapNet`] maps the 6-channel stack `[R, G, B, head mask, V, V̂]` to a
//! 64x64 target heatmap in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::attention::EncoderLayer;
use crate::error::{shape_err, NnError, Result};
use crate::graph::{Graph, Var};
use crate::layers::{BatchNorm, Conv2d, ConvTranspose2d, Linear, Mlp};
use crate::params::{BufferSpec, Init, Module, ParamSpec, ParamStore};
use crate::resnet::{ResNet, ResNetConfig};

/// Side length of the depth, scene and field-of-view inputs.
pub const INPUT_SIZE: usize = 224;
/// Side length of the predicted target heatmap.
pub const HEATMAP_SIZE: usize = 64;
/// Channels of the heatmap network input: RGB, head mask, V, V̂.
pub const HEATMAP_INPUT_CHANNELS: usize = 6;
/// Floor used when normalizing the raw gaze regression.
pub const GAZE_NORM_EPS: f64 = 1e-8;
/// Initial bias of the last deconvolution: the logit of the mean value of a
/// σ = 3 Gaussian target on the 64x64 grid (2π·9 / 4096 ≈ 0.0138). Starting
/// there skips the phase where the whole map is pushed towards zero, during
/// which the sparsely covered border cells of the stride-2 deconvolutions end
/// up as the maximum.
pub const HEATMAP_PRIOR_LOGIT: f64 = -4.27;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazeNetConfig {
    /// 13 for the upper-body layout, 17 for the full-body ablation.
    pub pose_joints: usize,
    pub pose_mlp_dims: Vec<usize>,
    pub depth_encoder: ResNetConfig,
    /// Widths of the three linear layers after the depth encoder; the last
    /// one is the depth feature width.
    pub depth_fc_dims: Vec<usize>,
    pub depth_dropout: f64,
    pub attention_heads: usize,
    pub attention_dim: usize,
    pub ff_dim: usize,
    pub attention_dropout: f64,
    pub head_dims: Vec<usize>,
}

impl Default for GazeNetConfig {
    fn default() -> Self {
        Self {
            pose_joints: 13,
            pose_mlp_dims: vec![64, 128, 256],
            depth_encoder: ResNetConfig::resnet50(1),
            depth_fc_dims: vec![1024, 512, 256],
            depth_dropout: 0.5,
            attention_heads: 4,
            attention_dim: 256,
            ff_dim: 2048,
            attention_dropout: 0.1,
            head_dims: vec![256, 3],
        }
    }
}

impl GazeNetConfig {
    pub fn tiny() -> Self {
        Self {
            pose_joints: 13,
            pose_mlp_dims: vec![32, 32, 32],
            depth_encoder: ResNetConfig::tiny(1),
            depth_fc_dims: vec![32, 32, 32],
            depth_dropout: 0.0,
            attention_heads: 4,
            attention_dim: 32,
            ff_dim: 64,
            attention_dropout: 0.0,
            head_dims: vec![32, 3],
        }
    }

    pub fn depth_feature_dim(&self) -> usize {
        self.depth_fc_dims.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.attention_dim;
        if self.attention_heads == 0 || !d.is_multiple_of(self.attention_heads) {
            return Err(NnError::Config(format!(
                "attention_dim {d} not divisible by attention_heads {}",
                self.attention_heads
            )));
        }
        if self.pose_joints == 0 {
            return Err(NnError::Config("pose_joints must be positive".into()));
        }
        if self.pose_mlp_dims.last() != Some(&d) {
            return Err(NnError::Config("last pose_mlp_dims entry must equal attention_dim".into()));
        }
        if self.depth_fc_dims.len() != 3 || self.depth_feature_dim() != d {
            return Err(NnError::Config("depth_fc_dims must have 3 entries ending in attention_dim".into()));
        }
        if self.head_dims.len() != 2 || self.head_dims[1] != 3 {
            return Err(NnError::Config("head_dims must be two widths ending in 3".into()));
        }
        for p in [self.depth_dropout, self.attention_dropout] {
            if !(0.0..1.0).contains(&p) {
                return Err(NnError::Config(format!("dropout {p} outside [0, 1)")));
            }
        }
        self.depth_encoder.validate()?;
        if self.depth_encoder.in_channels != 1 {
            return Err(NnError::Config("depth encoder takes a single channel".into()));
        }
        Ok(())
    }
}

pub struct FusedFeatures {
    /// `[N, 2 * attention_dim]`: the pose token followed by the depth token.
    pub features: Var,
    /// `[N * heads, 2, 2]` attention probabilities.
    pub attention: Var,
}

pub struct GazeOutput {
    /// `[N, 3]` unit vectors.
    pub gaze: Var,
    pub attention: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GazeNet {
    pub config: GazeNetConfig,
    pose_mlp: Mlp,
    depth_encoder: ResNet,
    depth_fc: Mlp,
    fuse: EncoderLayer,
    head_hidden: Linear,
    head_out: Linear,
}

impl GazeNet {
    pub const PREFIX: &'static str = "gaze";

    pub fn new(config: GazeNetConfig) -> Result<Self> {
        config.validate()?;
        let p = Self::PREFIX;
        let d = config.attention_dim;
        Ok(Self {
            pose_mlp: Mlp::new(&format!("{p}.pose"), 2 * config.pose_joints, &config.pose_mlp_dims, 0.0),
            depth_encoder: ResNet::new(&format!("{p}.depth.encoder"), config.depth_encoder.clone())?,
            depth_fc: Mlp::new(
                &format!("{p}.depth.fc"),
                config.depth_encoder.out_channels(),
                &config.depth_fc_dims,
                config.depth_dropout,
            ),
            fuse: EncoderLayer::new(&format!("{p}.fuse"), d, config.attention_heads, config.ff_dim, config.attention_dropout)?,
            head_hidden: Linear::new(format!("{p}.head.0"), 2 * d, config.head_dims[0]),
            head_out: Linear::new(format!("{p}.head.1"), config.head_dims[0], 3),
            config,
        })
    }

    pub fn depth_encoder(&self) -> &ResNet {
        &self.depth_encoder
    }

    /// `[N, 2 * joints]` flattened normalized pose to `[N, attention_dim]`.
    pub fn pose_embed(&self, g: &mut Graph, p: &ParamStore, pose: Var) -> Result<Var> {
        let want = 2 * self.config.pose_joints;
        let t = g.value(pose);
        if t.rank() != 2 || t.dim(1) != want {
            return Err(shape_err("pose_embed", format!("expected [N, {want}], got {:?}", t.shape())));
        }
        if !t.is_finite() {
            return Err(NnError::NonFinite("pose input"));
        }
        self.pose_mlp.forward(g, p, pose)
    }

    /// `[N, 1, 224, 224]` depth scaled to `[0, 1]` to `[N, attention_dim]`.
    pub fn depth_encode(&self, g: &mut Graph, p: &ParamStore, depth: Var) -> Result<Var> {
        let t = g.value(depth);
        if t.rank() != 4 || t.dim(1) != 1 || t.dim(2) != INPUT_SIZE || t.dim(3) != INPUT_SIZE {
            return Err(shape_err(
                "depth_encode",
                format!("expected [N, 1, {INPUT_SIZE}, {INPUT_SIZE}], got {:?}", t.shape()),
            ));
        }
        if !t.is_finite() {
            return Err(NnError::NonFinite("depth input"));
        }
        let h = self.depth_encoder.forward(g, p, depth)?;
        let h = g.global_avg_pool(h)?;
        self.depth_fc.forward(g, p, h)
    }

    /// Self-attention over the two-token sequence `[pose, depth]`.
    pub fn attention_fuse(&self, g: &mut Graph, p: &ParamStore, pose_feat: Var, depth_feat: Var) -> Result<FusedFeatures> {
        let d = self.config.attention_dim;
        let (ps, ds) = (g.shape(pose_feat).to_vec(), g.shape(depth_feat).to_vec());
        if ps.len() != 2 || ps != ds || ps[1] != d {
            return Err(NnError::Config(format!("fusion expects two [N, {d}] features, got {ps:?} and {ds:?}")));
        }
        let n = ps[0];
        let a = g.reshape(pose_feat, &[n, 1, d])?;
        let b = g.reshape(depth_feat, &[n, 1, d])?;
        let tokens = g.concat(&[a, b], 1)?;
        let out = self.fuse.forward(g, p, tokens)?;
        let features = g.reshape(out.tokens, &[n, 2 * d])?;
        Ok(FusedFeatures {
            features,
            attention: out.attention,
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, pose: Var, depth: Var) -> Result<GazeOutput> {
        let pf = self.pose_embed(g, p, pose)?;
        let df = self.depth_encode(g, p, depth)?;
        let fused = self.attention_fuse(g, p, pf, df)?;
        let h = self.head_hidden.forward(g, p, fused.features)?;
        let h = g.relu(h);
        let raw = self.head_out.forward(g, p, h)?;
        let gaze = g.normalize_rows(raw, GAZE_NORM_EPS)?;
        Ok(GazeOutput {
            gaze,
            attention: fused.attention,
        })
    }
}

impl Module for GazeNet {
    fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        self.pose_mlp.param_specs(out);
        self.depth_encoder.param_specs(out);
        self.depth_fc.param_specs(out);
        self.fuse.param_specs(out);
        self.head_hidden.param_specs(out);
        self.head_out.param_specs(out);
    }

    fn buffer_specs(&self, out: &mut Vec<BufferSpec>) {
        self.depth_encoder.buffer_specs(out);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapNetConfig {
    pub input_channels: usize,
    pub encoder: ResNetConfig,
    /// Output widths of the two 1x1 decoder convolutions.
    pub decoder_conv_dims: Vec<usize>,
    /// Output widths of the first two deconvolutions (the third emits one
    /// channel).
    pub decoder_deconv_dims: Vec<usize>,
}

impl Default for HeatmapNetConfig {
    fn default() -> Self {
        Self {
            input_channels: HEATMAP_INPUT_CHANNELS,
            encoder: ResNetConfig::resnet50(HEATMAP_INPUT_CHANNELS),
            decoder_conv_dims: vec![1024, 512],
            decoder_deconv_dims: vec![256, 128],
        }
    }
}

impl HeatmapNetConfig {
    pub fn tiny() -> Self {
        Self {
            input_channels: HEATMAP_INPUT_CHANNELS,
            encoder: ResNetConfig::tiny(HEATMAP_INPUT_CHANNELS),
            decoder_conv_dims: vec![32, 16],
            decoder_deconv_dims: vec![16, 8],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels != HEATMAP_INPUT_CHANNELS || self.encoder.in_channels != HEATMAP_INPUT_CHANNELS {
            return Err(NnError::Config(format!("heatmap network takes {HEATMAP_INPUT_CHANNELS} input channels")));
        }
        if self.decoder_conv_dims.len() != 2 || self.decoder_deconv_dims.len() != 2 {
            return Err(NnError::Config("decoder needs two conv widths and two deconv widths".into()));
        }
        if self.decoder_conv_dims.contains(&0) || self.decoder_deconv_dims.contains(&0) {
            return Err(NnError::Config("decoder widths must be positive".into()));
        }
        if INPUT_SIZE / self.encoder.output_stride() != 7 {
            return Err(NnError::Config("encoder must reduce 224 to 7 (four stages)".into()));
        }
        self.encoder.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapNet {
    pub config: HeatmapNetConfig,
    encoder: ResNet,
    convs: Vec<(Conv2d, BatchNorm)>,
    deconvs: Vec<(ConvTranspose2d, BatchNorm)>,
    last: ConvTranspose2d,
}

impl HeatmapNet {
    pub const PREFIX: &'static str = "heat";

    pub fn new(config: HeatmapNetConfig) -> Result<Self> {
        config.validate()?;
        let p = Self::PREFIX;
        let encoder = ResNet::new(&format!("{p}.encoder"), config.encoder.clone())?;
        let mut prev = config.encoder.out_channels();
        let mut convs = Vec::new();
        for (i, &c) in config.decoder_conv_dims.iter().enumerate() {
            convs.push((
                Conv2d::new(format!("{p}.decoder.conv{}", i + 1), prev, c, 1, 1, 0),
                BatchNorm::new(format!("{p}.decoder.bn{}", i + 1), c),
            ));
            prev = c;
        }
        // 7 -> 15 -> 31 -> 64 with kernels 3, 3, 4 at stride 2.
        let mut deconvs = Vec::new();
        for (i, &c) in config.decoder_deconv_dims.iter().enumerate() {
            deconvs.push((
                ConvTranspose2d::new(format!("{p}.decoder.deconv{}", i + 1), prev, c, 3, 2, false),
                BatchNorm::new(format!("{p}.decoder.deconv_bn{}", i + 1), c),
            ));
            prev = c;
        }
        let last = ConvTranspose2d::new(format!("{p}.decoder.deconv3"), prev, 1, 4, 2, true)
            .with_bias_init(Init::Constant(HEATMAP_PRIOR_LOGIT));
        Ok(Self {
            config,
            encoder,
            convs,
            deconvs,
            last,
        })
    }

    pub fn encoder(&self) -> &ResNet {
        &self.encoder
    }

    /// `[N, 6, 224, 224]` to `[N, 1, 64, 64]` in `[0, 1]`.
    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Result<Var> {
        self.forward_parts(g, p, &[x])
    }

    /// Input given as channel groups that concatenate to the 6-channel stack,
    /// e.g. `[scene + mask, V + V̂]`.
    pub fn forward_parts(&self, g: &mut Graph, p: &ParamStore, parts: &[Var]) -> Result<Var> {
        let mut channels = 0;
        for &x in parts {
            let t = g.value(x);
            if t.rank() != 4 || t.shape()[2..] != [INPUT_SIZE, INPUT_SIZE] || t.dim(0) != g.shape(parts[0])[0] {
                return Err(shape_err("heatmap_forward", format!("expected [N, C, 224, 224], got {:?}", t.shape())));
            }
            if !t.is_finite() {
                return Err(NnError::NonFinite("heatmap input"));
            }
            channels += t.dim(1);
        }
        if channels != HEATMAP_INPUT_CHANNELS {
            return Err(shape_err("heatmap_forward", format!("{channels} input channels, expected 6")));
        }
        let mut h = self.encoder.forward_parts(g, p, parts)?;
        for (conv, bn) in &self.convs {
            h = conv.forward(g, p, h)?;
            h = bn.forward(g, p, h)?;
            h = g.relu(h);
        }
        for (deconv, bn) in &self.deconvs {
            h = deconv.forward(g, p, h)?;
            h = bn.forward(g, p, h)?;
            h = g.relu(h);
        }
        h = self.last.forward(g, p, h)?;
        let out = g.sigmoid(h);
        let s = g.shape(out);
        if s[2] != HEATMAP_SIZE || s[3] != HEATMAP_SIZE {
            return Err(shape_err("heatmap_forward", format!("decoder produced {s:?}")));
        }
        Ok(out)
    }
}

impl Module for HeatmapNet {
    fn param_specs(&self, out: &mut Vec<ParamSpec>) {
        self.encoder.param_specs(out);
        for (c, b) in &self.convs {
            c.param_specs(out);
            b.param_specs(out);
        }
        for (c, b) in &self.deconvs {
            c.param_specs(out);
            b.param_specs(out);
        }
        self.last.param_specs(out);
    }

    fn buffer_specs(&self, out: &mut Vec<BufferSpec>) {
        self.encoder.buffer_specs(out);
        for (_, b) in &self.convs {
            b.buffer_specs(out);
        }
        for (_, b) in &self.deconvs {
            b.buffer_specs(out);
        }
    }
}

/// Human-readable listing of parameter names, shapes and the total count.
pub fn describe(module: &dyn Module) -> String {
    let mut specs = Vec::new();
    module.param_specs(&mut specs);
    let mut s = String::new();
    let mut total = 0usize;
    for spec in &specs {
        let n: usize = spec.shape.iter().product();
        total += n;
        s.push_str(&format!("{:<60} {:?} {n}\n", spec.name, spec.shape));
    }
    s.push_str(&format!("total parameters: {total}\n"));
    s
}
