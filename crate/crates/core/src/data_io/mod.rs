//! Annotation ingestion, preprocessing transforms, tiling, synthetic scenes
//! and on-disk formats.

mod dota;
mod letterbox;
mod planes_io;
mod records;
mod synth;
mod tiling;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use dota::{format_dota, parse_dota, parse_dota_bytes, ClassTable, DotaParse, DOTA_CLASSES};
pub use letterbox::{letterbox, LetterboxTransform};
pub use planes_io::{read_planes, write_planes, PlaneEntry, PlanesSidecar, PLANES_SCHEMA_VERSION};
pub use records::{
    format_detections_dota, read_dataset, read_detections_jsonl, write_detections_jsonl, Dataset,
    DetectionRecord, ImageRecord, SceneFile, SCENE_SCHEMA_VERSION,
};
pub use synth::{synth_scene, SynthSpec};
pub use tiling::{crop_scene, tile_grid, TileGrid};

/// Problem found while reading an annotation source. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "diagnostic", rename_all = "snake_case")]
pub enum Diagnostic {
    UnknownClass { line: usize, token: String },
    ParseError { line: usize, message: String },
    DegenerateBox { line: usize, message: String },
    /// Annotation dropped while cropping to a tile or image window.
    Dropped { index: usize, reason: String },
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
