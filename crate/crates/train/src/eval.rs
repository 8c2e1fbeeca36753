//! Evaluation protocol, the learned-model predictor and the reference
//! predictors (ground-truth gaze oracle, Random and Center baselines).

use log::warn;
use privgaze_core::data::sample::pixel_to_normalized;
use privgaze_core::data::GazeSample;
use privgaze_core::geometry::{compute_fov_heatmaps, retrieve_3d_target, unproject, PointCloud, Vec3};
use privgaze_core::supervision::{cell_center, metric_angle, metric_auc, metric_dist3d, MetricReport};
use privgaze_core::{CoreError, Grid};
use privgaze_nn::{GazeNet, Graph, HeatmapNet, Mode, ParamStore, HEATMAP_SIZE, INPUT_SIZE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Result, TrainError};
use crate::inputs::{prepare, stack, Dataset, PreparedInput};

/// Width of the center baseline's Gaussian, in 64-grid cells.
pub const CENTER_SIGMA_CELLS: f64 = 16.0;

/// Everything a predictor says about one sample.
#[derive(Clone, Debug)]
pub struct Prediction {
    /// Target heatmap (any resolution; scored after resizing to the scene).
    pub heatmap: Grid<f64>,
    /// Predicted 2D target, normalized.
    pub point_2d: [f64; 2],
    pub target_3d: Vec3,
    /// Final 3D gaze direction (after target retrieval where applicable).
    pub gaze: Vec3,
    /// Direction emitted by the gaze network before retrieval.
    pub raw_gaze: Vec3,
    /// Sharpened field-of-view map at network resolution, kept for figures.
    pub fov: Option<Grid<f64>>,
}

pub trait Predictor {
    fn name(&self) -> String;

    /// Samples scored together; the model predictor batches forward passes.
    fn batch_size(&self) -> usize {
        1
    }

    /// One result per `(dataset index, sample)` pair, in order.
    fn predict(&mut self, batch: &[(usize, &GazeSample)]) -> Vec<Result<Prediction>>;
}

/// Metrics of one prediction against its sample.
pub fn score(s: &GazeSample, p: &Prediction) -> Result<MetricReport> {
    let r = MetricReport {
        dist_3d: metric_dist3d(&p.target_3d, &s.gt_target_3d),
        angle_error: metric_angle(&s.gt_gaze.vec(), &p.gaze)?,
        auc: metric_auc(&p.heatmap, s.target_pixel(), (s.width(), s.height()))?,
        dist_2d: (p.point_2d[0] - s.gt_target_2d[0]).hypot(p.point_2d[1] - s.gt_target_2d[1]),
    };
    r.validate()?;
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub id: String,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    /// Angle error of the direct gaze-network output, degrees.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_angle_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub predictor: String,
    /// Mean over successfully scored samples; `None` if there were none.
    pub mean: Option<MetricReport>,
    pub mean_raw_angle: Option<f64>,
    pub records: Vec<SampleRecord>,
    pub failures: usize,
}

impl EvalReport {
    pub fn scored(&self) -> usize {
        self.records.len() - self.failures
    }

    /// Summary block: the metric line, then counts.
    pub fn summary(&self) -> String {
        let mut s = match &self.mean {
            Some(m) => format!("{m}\n"),
            None => "no sample could be scored\n".to_string(),
        };
        s.push_str(&format!(
            "predictor={} samples={} scored={} failures={}\n",
            self.predictor,
            self.records.len(),
            self.scored(),
            self.failures
        ));
        s
    }

    /// Per-sample records as JSON lines.
    pub fn records_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
    }
}

/// Scores `predictor` on `indices`. A sample that fails to load, predict or
/// score is recorded with its error and counted; it never aborts the run.
/// `on_prediction` sees every successful prediction (used for figures).
pub fn evaluate_with(
    data: &Dataset,
    indices: &[usize],
    predictor: &mut dyn Predictor,
    mut on_prediction: impl FnMut(usize, &GazeSample, &Prediction),
) -> EvalReport {
    let mut records = Vec::with_capacity(indices.len());
    let bs = predictor.batch_size().max(1);
    for chunk in indices.chunks(bs) {
        let mut loaded = Vec::new();
        let mut slots = Vec::new();
        for &i in chunk {
            records.push(SampleRecord {
                index: i,
                id: data.id(i),
                metrics: None,
                raw_angle_error: None,
                error: None,
            });
            match data.get(i) {
                Ok(s) => {
                    loaded.push((i, s));
                    slots.push(records.len() - 1);
                }
                Err(e) => records.last_mut().unwrap().error = Some(e.to_string()),
            }
        }
        let refs: Vec<(usize, &GazeSample)> = loaded.iter().map(|(i, s)| (*i, s)).collect();
        let preds = predictor.predict(&refs);
        for ((slot, (i, s)), pred) in slots.into_iter().zip(&loaded).zip(preds) {
            let rec = &mut records[slot];
            match pred.and_then(|p| {
                let m = score(s, &p)?;
                on_prediction(*i, s, &p);
                Ok((m, metric_angle(&s.gt_gaze.vec(), &p.raw_gaze)?))
            }) {
                Ok((m, raw)) => {
                    rec.metrics = Some(m);
                    rec.raw_angle_error = Some(raw);
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
        }
    }
    let ok: Vec<&SampleRecord> = records.iter().filter(|r| r.metrics.is_some()).collect();
    let failures = records.len() - ok.len();
    if failures > 0 {
        warn!("{}: {failures} of {} samples failed and were excluded", predictor.name(), records.len());
    }
    let mean = MetricReport::mean(&ok.iter().map(|r| r.metrics.unwrap()).collect::<Vec<_>>());
    let mean_raw_angle = (!ok.is_empty()).then(|| ok.iter().map(|r| r.raw_angle_error.unwrap()).sum::<f64>() / ok.len() as f64);
    EvalReport {
        predictor: predictor.name(),
        mean,
        mean_raw_angle,
        records,
        failures,
    }
}

pub fn evaluate(data: &Dataset, indices: &[usize], predictor: &mut dyn Predictor) -> EvalReport {
    evaluate_with(data, indices, predictor, |_, _, _| {})
}

/// Retrieval window radius at the sample's native width.
pub fn native_radius(radius_224: usize, width: usize) -> usize {
    ((radius_224 * width) as f64 / INPUT_SIZE as f64).round() as usize
}

/// The learned pipeline: gaze network, field-of-view maps, heatmap network,
/// then 3D target retrieval against the native-resolution point cloud.
pub struct ModelPredictor<'a> {
    pub gaze: GazeNet,
    pub heat: HeatmapNet,
    pub params: &'a ParamStore,
    pub config: &'a TrainConfig,
    pub batch: usize,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(config: &'a TrainConfig, params: &'a ParamStore) -> Result<Self> {
        Ok(Self {
            gaze: GazeNet::new(config.gaze_net())?,
            heat: HeatmapNet::new(config.heatmap_net())?,
            params,
            config,
            batch: 8,
        })
    }

    fn run(&self, samples: &[&GazeSample], inputs: &[PreparedInput]) -> Result<Vec<Result<Prediction>>> {
        let b = stack(inputs)?;
        let mut g = Graph::new(Mode::Eval, 0);
        let pose = g.input(b.pose);
        let depth = g.input(b.depth);
        let out = self.gaze.forward(&mut g, self.params, pose, depth)?;
        let fov = g.fov(out.gaze, b.dirs, INPUT_SIZE, INPUT_SIZE, self.config.geometry.fov_alpha)?;
        let sm = g.input(b.scene_mask);
        let heat = self.heat.forward_parts(&mut g, self.params, &[sm, fov])?;
        let (gz, fv, ht) = (g.value(out.gaze), g.value(fov), g.value(heat));
        let (hp, px) = (HEATMAP_SIZE * HEATMAP_SIZE, INPUT_SIZE * INPUT_SIZE);
        Ok(samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let raw = Vec3::from_column_slice(&gz.data()[i * 3..i * 3 + 3]);
                let heatmap = Grid::from_vec(HEATMAP_SIZE, HEATMAP_SIZE, ht.data()[i * hp..(i + 1) * hp].to_vec()).unwrap();
                let v_hat = Grid::from_vec(INPUT_SIZE, INPUT_SIZE, fv.data()[(2 * i + 1) * px..(2 * i + 2) * px].to_vec()).unwrap();
                let cloud = unproject(&s.depth, &s.intrinsics)?;
                let r = retrieve_3d_target(
                    &heatmap,
                    &cloud,
                    &s.eye_3d,
                    &raw,
                    native_radius(self.config.geometry.window_radius, s.width()),
                )?;
                let (row, col) = heatmap.argmax();
                let (x, y) = cell_center(row, col, heatmap.dims());
                Ok(Prediction {
                    heatmap,
                    point_2d: [x, y],
                    target_3d: r.target_3d,
                    gaze: r.refined_gaze.vec(),
                    raw_gaze: raw,
                    fov: Some(v_hat),
                })
            })
            .collect())
    }
}

impl Predictor for ModelPredictor<'_> {
    fn name(&self) -> String {
        "model".into()
    }

    fn batch_size(&self) -> usize {
        self.batch
    }

    fn predict(&mut self, batch: &[(usize, &GazeSample)]) -> Vec<Result<Prediction>> {
        let mut out: Vec<Option<Result<Prediction>>> = Vec::with_capacity(batch.len());
        let mut ok_samples = Vec::new();
        let mut ok_inputs = Vec::new();
        let mut ok_slots = Vec::new();
        for (slot, (_, s)) in batch.iter().enumerate() {
            match prepare(s, self.config) {
                Ok(p) => {
                    ok_samples.push(*s);
                    ok_inputs.push(p);
                    ok_slots.push(slot);
                    out.push(None);
                }
                Err(e) => out.push(Some(Err(e))),
            }
        }
        if !ok_inputs.is_empty() {
            match self.run(&ok_samples, &ok_inputs) {
                Ok(preds) => {
                    for (slot, p) in ok_slots.into_iter().zip(preds) {
                        out[slot] = Some(p);
                    }
                }
                Err(e) => {
                    let msg = e.to_string();
                    for slot in ok_slots {
                        out[slot] = Some(Err(TrainError::Data(msg.clone())));
                    }
                }
            }
        }
        out.into_iter().map(|p| p.expect("every slot filled")).collect()
    }
}

fn unit_from(eye: &Vec3, p: &Vec3) -> Result<Vec3> {
    let d = p - eye;
    let n = d.norm();
    if !(n > 0.0) {
        return Err(CoreError::ZeroNorm.into());
    }
    Ok(d / n)
}

/// Ground-truth gaze fed through the geometric half of the pipeline: the
/// heatmap is the sharpened field-of-view map, downsampled to 64x64.
pub struct OraclePredictor {
    pub alpha: f64,
    pub window_radius: usize,
}

impl Predictor for OraclePredictor {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn predict(&mut self, batch: &[(usize, &GazeSample)]) -> Vec<Result<Prediction>> {
        batch
            .iter()
            .map(|(_, s)| {
                let cloud = unproject(&s.depth, &s.intrinsics)?;
                let g = s.gt_gaze.vec();
                let fov = compute_fov_heatmaps(&cloud, &s.eye_3d, &g, self.alpha)?;
                let heatmap = fov.v_hat.resize_bilinear(HEATMAP_SIZE, HEATMAP_SIZE);
                let r = retrieve_3d_target(&heatmap, &cloud, &s.eye_3d, &g, native_radius(self.window_radius, s.width()))?;
                let (row, col) = heatmap.argmax();
                let (x, y) = cell_center(row, col, heatmap.dims());
                Ok(Prediction {
                    heatmap,
                    point_2d: [x, y],
                    target_3d: r.target_3d,
                    gaze: r.refined_gaze.vec(),
                    raw_gaze: g,
                    fov: Some(fov.v_hat),
                })
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    Random,
    Center,
}

impl std::str::FromStr for Baseline {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Baseline::Random),
            "center" => Ok(Baseline::Center),
            _ => Err(TrainError::Config(format!("unknown baseline `{s}` (random or center)"))),
        }
    }
}

/// Random: i.i.d. uniform heatmap, uniform pixel, uniform valid cloud point.
/// Center: image center, a centered Gaussian heatmap and the valid point
/// nearest the cloud centroid. Gaze directions point from the eye to the
/// chosen 3D point.
pub struct BaselinePredictor {
    pub kind: Baseline,
    pub seed: u64,
}

fn valid_points(cloud: &PointCloud) -> Vec<Vec3> {
    cloud.valid_points().map(|(_, _, p)| p).collect()
}

impl BaselinePredictor {
    fn one(&self, index: usize, s: &GazeSample) -> Result<Prediction> {
        let cloud = unproject(&s.depth, &s.intrinsics)?;
        let pts = valid_points(&cloud);
        if pts.is_empty() {
            return Err(CoreError::NoTarget.into());
        }
        let (heatmap, point_2d, target_3d) = match self.kind {
            Baseline::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let heatmap = Grid::from_fn(HEATMAP_SIZE, HEATMAP_SIZE, |_, _| rng.random::<f64>());
                let u = rng.random_range(0..s.width());
                let v = rng.random_range(0..s.height());
                let p = pts[rng.random_range(0..pts.len())];
                (heatmap, pixel_to_normalized(u, v, s.width(), s.height()), p)
            }
            Baseline::Center => {
                let c = (HEATMAP_SIZE as f64 - 1.0) / 2.0;
                let k = 2.0 * CENTER_SIGMA_CELLS * CENTER_SIGMA_CELLS;
                let heatmap = Grid::from_fn(HEATMAP_SIZE, HEATMAP_SIZE, |r, col| {
                    (-((r as f64 - c).powi(2) + (col as f64 - c).powi(2)) / k).exp()
                });
                let centroid = pts.iter().fold(Vec3::zeros(), |a, p| a + p) / pts.len() as f64;
                let mut best = pts[0];
                for p in &pts[1..] {
                    if (p - centroid).norm_squared() < (best - centroid).norm_squared() {
                        best = *p;
                    }
                }
                (heatmap, [0.5, 0.5], best)
            }
        };
        let gaze = unit_from(&s.eye_3d, &target_3d)?;
        Ok(Prediction {
            heatmap,
            point_2d,
            target_3d,
            gaze,
            raw_gaze: gaze,
            fov: None,
        })
    }
}

impl Predictor for BaselinePredictor {
    fn name(&self) -> String {
        match self.kind {
            Baseline::Random => "random".into(),
            Baseline::Center => "center".into(),
        }
    }

    fn predict(&mut self, batch: &[(usize, &GazeSample)]) -> Vec<Result<Prediction>> {
        batch.iter().map(|(i, s)| self.one(*i, s)).collect()
    }
}

/// Mean angle error (degrees) of the gaze network alone, evaluation mode.
pub fn gaze_angle_error(data: &Dataset, indices: &[usize], config: &TrainConfig, params: &ParamStore) -> Result<f64> {
    let net = GazeNet::new(config.gaze_net())?;
    let mut total = 0.0;
    for chunk in indices.chunks(16) {
        let mut inputs = Vec::with_capacity(chunk.len());
        for &i in chunk {
            inputs.push(prepare(&data.get(i)?, config)?);
        }
        let b = stack(&inputs)?;
        let mut g = Graph::new(Mode::Eval, 0);
        let pose = g.input(b.pose);
        let depth = g.input(b.depth);
        let out = net.forward(&mut g, params, pose, depth)?;
        let pred = g.value(out.gaze).data();
        for (k, inp) in inputs.iter().enumerate() {
            let p = Vec3::from_column_slice(&pred[k * 3..k * 3 + 3]);
            total += metric_angle(&Vec3::from(inp.gt_gaze), &p)?;
        }
    }
    if indices.is_empty() {
        return Err(TrainError::Data("no samples to evaluate".into()));
    }
    Ok(total / indices.len() as f64)
}
