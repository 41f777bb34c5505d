//! Resolved run configuration: defaults, then an optional JSON file, then
//! command-line flags.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use twopoint_core::data_io::SynthSpec;
use twopoint_core::simulation::Perturbation;
use twopoint_core::{ApMethod, DecodeConfig, DecodeMode, EncoderConfig, EvalConfig, ExtentMode, HeatmapKind};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Class names; empty means "use the input's own table".
    pub classes: Vec<String>,
    pub encoder: EncoderConfig<f64>,
    pub decoder: DecodeConfig<f64>,
    pub eval: EvalConfig,
    pub synth: SynthSpec,
    pub perturbation: Perturbation,
    pub min_iou: f64,
    pub max_direction_err: f64,
    pub tile_size: usize,
    pub gap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            classes: Vec::new(),
            encoder: EncoderConfig::default(),
            decoder: DecodeConfig::default(),
            eval: EvalConfig::default(),
            synth: SynthSpec::default(),
            perturbation: Perturbation::default(),
            min_iou: 0.95,
            max_direction_err: 1.0,
            tile_size: 1024,
            gap: 200,
        }
    }
}

/// Overlays `patch` onto `base`. Keys absent from `base` are rejected.
fn merge(base: &mut Value, patch: &Value, path: &str) -> Result<(), CliError> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                let slot = b
                    .get_mut(k)
                    .ok_or_else(|| CliError::Input(format!("unknown config key {here:?}")))?;
                merge(slot, v, &here)?;
            }
            Ok(())
        }
        (b, p) => {
            *b = p.clone();
            Ok(())
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let mut value = serde_json::to_value(RunConfig::default()).expect("default config serializes");
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let patch: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))?;
        merge(&mut value, &patch, "")?;
    }
    serde_json::from_value(value).map_err(|e| CliError::Input(format!("invalid config: {e}")))
}

#[derive(Debug, Clone, Default, Args)]
pub struct EncoderFlags {
    /// Input pixels per output cell.
    #[arg(long)]
    pub down_ratio: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long, value_enum)]
    pub heatmap_kind: Option<HeatmapArg>,
    #[arg(long)]
    pub gaussian_sigma_rule: Option<f64>,
    #[arg(long)]
    pub vertex_shrink: Option<f64>,
    #[arg(long, value_enum)]
    pub extent_mode: Option<ExtentArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum HeatmapArg {
    SolarCorona,
    Gaussian,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ExtentArg {
    Linear,
    Squared,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ModeArg {
    AngleOnly,
    KeypointMatch,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ApArg {
    Voc07,
    Continuous,
}

impl EncoderFlags {
    pub fn apply(&self, c: &mut EncoderConfig<f64>) {
        if let Some(v) = self.down_ratio {
            c.down_ratio = v;
        }
        if let Some(v) = self.mu {
            c.mu = v;
        }
        if let Some(v) = self.num_classes {
            c.num_classes = v;
        }
        if let Some(v) = self.heatmap_kind {
            c.heatmap_kind = match v {
                HeatmapArg::SolarCorona => HeatmapKind::SolarCorona,
                HeatmapArg::Gaussian => HeatmapKind::Gaussian,
            };
        }
        if let Some(v) = self.gaussian_sigma_rule {
            c.gaussian_sigma_rule = v;
        }
        if let Some(v) = self.vertex_shrink {
            c.vertex_shrink = v;
        }
        if let Some(v) = self.extent_mode {
            c.extent_mode = match v {
                ExtentArg::Linear => ExtentMode::Linear,
                ExtentArg::Squared => ExtentMode::Squared,
            };
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct DecoderFlags {
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub score_threshold: Option<f64>,
    #[arg(long)]
    pub match_radius_factor: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub nms_iou: Option<f64>,
    /// Run rotated NMS on every decoded image.
    #[arg(long)]
    pub single_image_nms: bool,
}

impl DecoderFlags {
    pub fn apply(&self, c: &mut DecodeConfig<f64>) {
        if let Some(v) = self.top_k {
            c.top_k = v;
        }
        if let Some(v) = self.score_threshold {
            c.score_threshold = v;
        }
        if let Some(v) = self.match_radius_factor {
            c.match_radius_factor = v;
        }
        if let Some(v) = self.mode {
            c.mode = match v {
                ModeArg::AngleOnly => DecodeMode::AngleOnly,
                ModeArg::KeypointMatch => DecodeMode::KeypointMatch,
            };
        }
        if let Some(v) = self.nms_iou {
            c.nms_iou = v;
        }
        if self.single_image_nms {
            c.single_image_nms = true;
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalFlags {
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub ap_method: Option<ApArg>,
}

impl EvalFlags {
    pub fn apply(&self, c: &mut EvalConfig) {
        if let Some(v) = self.iou_threshold {
            c.iou_threshold = v;
        }
        if let Some(v) = self.ap_method {
            c.ap_method = match v {
                ApArg::Voc07 => ApMethod::Voc07,
                ApArg::Continuous => ApMethod::Continuous,
            };
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthFlags {
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub min_instances: Option<usize>,
    #[arg(long)]
    pub max_instances: Option<usize>,
    #[arg(long)]
    pub synth_classes: Option<usize>,
    #[arg(long)]
    pub min_aspect: Option<f64>,
    #[arg(long)]
    pub max_aspect: Option<f64>,
}

impl SynthFlags {
    pub fn apply(&self, c: &mut SynthSpec) {
        if let Some(v) = self.width {
            c.image_width = v;
        }
        if let Some(v) = self.height {
            c.image_height = v;
        }
        if let Some(v) = self.min_instances {
            c.min_instances = v;
        }
        if let Some(v) = self.max_instances {
            c.max_instances = v;
        }
        if let Some(v) = self.synth_classes {
            c.num_classes = v;
        }
        if let Some(v) = self.min_aspect {
            c.min_aspect = v;
        }
        if let Some(v) = self.max_aspect {
            c.max_aspect = v;
        }
    }
}
