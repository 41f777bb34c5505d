//! Encode → simulated prediction → decode round trips.
//!
//! The simulated network output is built from the encoded truth. Every
//! instance contributes one spike on the center heatmap carrying the truth
//! confidence at that cell, with its regression values copied there. Two
//! optional perturbations model prediction error:
//!
//! * peak jitter: for instances with aspect ratio at least
//!   `jitter_min_aspect`, the spike moves by a uniform `{-1, 0, 1}²` cell
//!   offset, and its score becomes the truth heatmap value at the new cell;
//! * direction noise: a uniform `[-n, n]` degree error added to the direction
//!   plane.
//!
//! The vertex heatmap is always the encoded truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::{synth_scene, SynthSpec};
use crate::decoder::{decode, DecodeConfig, Detection};
use crate::error::Result;
use crate::geometry::{quad_to_obb, rotated_iou};
use crate::plane::Plane;
use crate::target_codec::{encode_scene, EncoderConfig, Scene, TargetMaps};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    /// Maximum spike displacement in cells, per axis.
    pub peak_jitter: usize,
    pub jitter_min_aspect: f64,
    /// Half-width of the uniform direction error, degrees.
    pub direction_noise_deg: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            peak_jitter: 0,
            jitter_min_aspect: 5.0,
            direction_noise_deg: 0.0,
        }
    }
}

impl Perturbation {
    pub fn is_exact(&self) -> bool {
        self.peak_jitter == 0 && self.direction_noise_deg == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoundtripConfig {
    pub encoder: EncoderConfig<f64>,
    pub decoder: DecodeConfig<f64>,
    pub synth: SynthSpec,
    pub perturbation: Perturbation,
    pub min_iou: f64,
    pub max_direction_err: f64,
}

impl Default for RoundtripConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            decoder: DecodeConfig::default(),
            synth: SynthSpec::default(),
            perturbation: Perturbation::default(),
            min_iou: 0.95,
            max_direction_err: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub index: usize,
    pub class_id: usize,
    /// Zero when no detection was assigned.
    pub iou: f64,
    /// Degrees; `None` when no detection was assigned.
    pub direction_err: Option<f64>,
    pub aspect_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneOutcome {
    pub instances: Vec<InstanceOutcome>,
    /// Detections not assigned to any ground truth.
    pub spurious: usize,
}

/// Aggregate over many scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub scenes: usize,
    pub instances: usize,
    pub min_iou: Option<f64>,
    pub mean_iou: Option<f64>,
    pub max_direction_err: Option<f64>,
    /// Instances below the IoU threshold, above the direction threshold or
    /// missed.
    pub failures: usize,
    pub spurious: usize,
}

impl RoundtripReport {
    pub fn from_outcomes(outcomes: &[SceneOutcome], min_iou: f64, max_direction_err: f64) -> Self {
        let all: Vec<&InstanceOutcome> = outcomes.iter().flat_map(|o| o.instances.iter()).collect();
        let n = all.len();
        let failures = all
            .iter()
            .filter(|i| !(i.iou >= min_iou && i.direction_err.is_some_and(|d| d <= max_direction_err)))
            .count();
        Self {
            scenes: outcomes.len(),
            instances: n,
            min_iou: all.iter().map(|i| i.iou).reduce(f64::min),
            mean_iou: (n > 0).then(|| all.iter().map(|i| i.iou).sum::<f64>() / n as f64),
            max_direction_err: all.iter().filter_map(|i| i.direction_err).reduce(f64::max),
            failures,
            spurious: outcomes.iter().map(|o| o.spurious).sum(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.spurious == 0
    }
}

/// Smallest absolute difference between two angles in degrees.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Prediction planes derived from encoded truth under `perturbation`.
pub fn simulate_prediction(
    truth: &TargetMaps<f64>,
    scene: &Scene<f64>,
    perturbation: &Perturbation,
    rng: &mut ChaCha8Rng,
) -> TargetMaps<f64> {
    let (gw, gh) = (truth.grid_width(), truth.grid_height());
    let mut pred = truth.clone();
    pred.center_hm = Plane::zeros(gw, gh, truth.num_classes);
    pred.size_map = Plane::zeros(gw, gh, 2);
    pred.offset_map = Plane::zeros(gw, gh, 4);
    pred.direction_map = Plane::zeros(gw, gh, 1);
    pred.pos_mask = Plane::zeros(gw, gh, 1);

    let d = truth.down_ratio as f64;
    for ann in &scene.annotations {
        let Ok(obb) = quad_to_obb(&ann.quad) else {
            continue;
        };
        let c = ann.class_id();
        let gx = (obb.center.x / d).floor();
        let gy = (obb.center.y / d).floor();
        if gx < 0.0 || gy < 0.0 || gx >= gw as f64 || gy >= gh as f64 {
            continue;
        }
        let (px, py) = (gx as usize, gy as usize);
        if truth.pos_mask.get(0, px, py) != 1.0 || truth.center_hm.get(c, px, py) != 1.0 {
            continue;
        }
        let j = perturbation.peak_jitter as i64;
        let (mut qx, mut qy) = (px, py);
        if j > 0 && obb.aspect_ratio() >= perturbation.jitter_min_aspect {
            let dx = rng.gen_range(-j..=j);
            let dy = rng.gen_range(-j..=j);
            qx = (px as i64 + dx).clamp(0, gw as i64 - 1) as usize;
            qy = (py as i64 + dy).clamp(0, gh as i64 - 1) as usize;
        }
        let score = truth.center_hm.get(c, qx, qy);
        pred.center_hm.max_assign(c, qx, qy, score);
        for k in 0..2 {
            pred.size_map.set(k, qx, qy, truth.size_map.get(k, px, py));
        }
        for k in 0..4 {
            pred.offset_map.set(k, qx, qy, truth.offset_map.get(k, px, py));
        }
        let mut theta = truth.direction_map.get(0, px, py);
        if perturbation.direction_noise_deg > 0.0 {
            let n = perturbation.direction_noise_deg;
            theta = (theta + rng.gen_range(-n..=n)).rem_euclid(360.0);
        }
        pred.direction_map.set(0, qx, qy, theta);
        pred.pos_mask.set(0, qx, qy, 1.0);
    }
    pred
}

/// One-to-one assignment of detections to ground truth by descending IoU.
pub fn score_detections(scene: &Scene<f64>, dets: &[Detection<f64>]) -> SceneOutcome {
    let mut pairs = Vec::new();
    for (i, ann) in scene.annotations.iter().enumerate() {
        for (j, d) in dets.iter().enumerate() {
            if d.class_id != ann.class_id() {
                continue;
            }
            let iou = rotated_iou(&ann.quad, &d.quad).map(|r| r.iou).unwrap_or(0.0);
            if iou > 0.0 {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_det = vec![None; scene.annotations.len()];
    let mut det_used = vec![false; dets.len()];
    for (iou, i, j) in pairs {
        if gt_det[i].is_none() && !det_used[j] {
            gt_det[i] = Some((j, iou));
            det_used[j] = true;
        }
    }
    let instances = scene
        .annotations
        .iter()
        .enumerate()
        .map(|(i, ann)| {
            let aspect = quad_to_obb(&ann.quad).map(|o| o.aspect_ratio()).unwrap_or(f64::NAN);
            let (iou, direction_err) = match gt_det[i] {
                Some((j, iou)) => {
                    let err = match (ann.quad.head_direction(), dets[j].quad.head_direction()) {
                        (Ok(a), Ok(b)) => angle_diff(a, b),
                        _ => 180.0,
                    };
                    (iou, Some(err))
                }
                None => (0.0, None),
            };
            InstanceOutcome {
                index: i,
                class_id: ann.class_id(),
                iou,
                direction_err,
                aspect_ratio: aspect,
            }
        })
        .collect();
    SceneOutcome {
        instances,
        spurious: det_used.iter().filter(|u| !**u).count(),
    }
}

/// Encodes, simulates a prediction, decodes and scores one scene. `seed`
/// drives the perturbation only.
pub fn roundtrip_scene(scene: &Scene<f64>, cfg: &RoundtripConfig, seed: u64) -> Result<SceneOutcome> {
    let truth = encode_scene(scene, &cfg.encoder)?;
    let pred = if cfg.perturbation.is_exact() {
        truth
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        simulate_prediction(&truth, scene, &cfg.perturbation, &mut rng)
    };
    let dets = decode(&pred, &cfg.decoder)?;
    Ok(score_detections(scene, &dets))
}

/// Scene seeds used by [`roundtrip_seeded`]: `base_seed + k`.
pub fn roundtrip_seeded(base_seed: u64, count: usize, cfg: &RoundtripConfig) -> Result<Vec<SceneOutcome>> {
    (0..count as u64)
        .map(|k| {
            let seed = base_seed.wrapping_add(k);
            let scene = synth_scene(seed, &cfg.synth)?;
            roundtrip_scene(&scene, cfg, seed)
        })
        .collect()
}
