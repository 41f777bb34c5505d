//! JSON scene, dataset and detection formats.
//!
//! Scene and dataset files carry `schema_version`. Detections are JSON lines,
//! one object per detection.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ClassTable;
use crate::decoder::{Detection, Provenance};
use crate::error::{Error, Result};
use crate::geometry::{Point2, RotatedQuad};
use crate::scalar::{cast, Real};
use crate::target_codec::{Annotation, Scene};

pub const SCENE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub corners: [[f64; 2]; 4],
    pub class_id: usize,
    #[serde(default)]
    pub difficult: bool,
}

fn corners_of<T: Real>(q: &RotatedQuad<T>) -> [[f64; 2]; 4] {
    q.corners.map(|p| [p.x.to_f64_lossy(), p.y.to_f64_lossy()])
}

fn quad_of<T: Real>(corners: &[[f64; 2]; 4], class_id: usize) -> RotatedQuad<T> {
    RotatedQuad::new(corners.map(|[x, y]| Point2::new(cast(x), cast(y))), class_id)
}

impl AnnotationRecord {
    pub fn from_annotation<T: Real>(a: &Annotation<T>) -> Self {
        Self {
            corners: corners_of(&a.quad),
            class_id: a.class_id(),
            difficult: a.difficult,
        }
    }

    pub fn to_annotation<T: Real>(&self) -> Annotation<T> {
        Annotation {
            quad: quad_of(&self.corners, self.class_id),
            difficult: self.difficult,
        }
    }
}

/// Single-image scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub schema_version: u32,
    #[serde(default)]
    pub classes: Vec<String>,
    pub image_width: usize,
    pub image_height: usize,
    pub annotations: Vec<AnnotationRecord>,
}

impl SceneFile {
    pub fn from_scene<T: Real>(scene: &Scene<T>, classes: &ClassTable) -> Self {
        Self {
            schema_version: SCENE_SCHEMA_VERSION,
            classes: classes.names.clone(),
            image_width: scene.image_width,
            image_height: scene.image_height,
            annotations: scene.annotations.iter().map(AnnotationRecord::from_annotation).collect(),
        }
    }

    pub fn to_scene<T: Real>(&self) -> Scene<T> {
        Scene {
            image_width: self.image_width,
            image_height: self.image_height,
            annotations: self.annotations.iter().map(AnnotationRecord::to_annotation).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub image_width: usize,
    pub image_height: usize,
    pub annotations: Vec<AnnotationRecord>,
}

/// Several scenes keyed by image id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema_version: u32,
    #[serde(default)]
    pub classes: Vec<String>,
    pub images: Vec<ImageRecord>,
}

impl Dataset {
    pub fn new(classes: &ClassTable) -> Self {
        Self {
            schema_version: SCENE_SCHEMA_VERSION,
            classes: classes.names.clone(),
            images: Vec::new(),
        }
    }

    pub fn push<T: Real>(&mut self, id: impl Into<String>, scene: &Scene<T>) {
        self.images.push(ImageRecord {
            id: id.into(),
            image_width: scene.image_width,
            image_height: scene.image_height,
            annotations: scene.annotations.iter().map(AnnotationRecord::from_annotation).collect(),
        });
    }

    pub fn scenes<T: Real>(&self) -> Vec<(String, Scene<T>)> {
        self.images
            .iter()
            .map(|r| {
                let s = SceneFile {
                    schema_version: self.schema_version,
                    classes: Vec::new(),
                    image_width: r.image_width,
                    image_height: r.image_height,
                    annotations: r.annotations.clone(),
                };
                (r.id.clone(), s.to_scene())
            })
            .collect()
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != SCENE_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported schema_version {v}, expected {SCENE_SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

/// Reads either a dataset file or a single scene file. A single scene gets
/// the file stem as its image id.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("images").is_some() {
        let ds: Dataset = serde_json::from_value(value)?;
        check_version(ds.schema_version)?;
        return Ok(ds);
    }
    let scene: SceneFile = serde_json::from_value(value)?;
    check_version(scene.schema_version)?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
    Ok(Dataset {
        schema_version: SCENE_SCHEMA_VERSION,
        classes: scene.classes,
        images: vec![ImageRecord {
            id,
            image_width: scene.image_width,
            image_height: scene.image_height,
            annotations: scene.annotations,
        }],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image: String,
    pub class: usize,
    pub score: f64,
    pub corners: [[f64; 2]; 4],
    pub provenance: Provenance,
}

impl DetectionRecord {
    pub fn from_detection<T: Real>(image: &str, d: &Detection<T>) -> Self {
        Self {
            image: image.to_string(),
            class: d.class_id,
            score: d.score.to_f64_lossy(),
            corners: corners_of(&d.quad),
            provenance: d.provenance,
        }
    }

    pub fn to_detection<T: Real>(&self) -> Detection<T> {
        Detection {
            quad: quad_of(&self.corners, self.class),
            class_id: self.class,
            score: cast(self.score),
            provenance: self.provenance,
        }
    }
}

pub fn write_detections_jsonl(records: &[DetectionRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn read_detections_jsonl(text: &str) -> Result<Vec<DetectionRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format(format!("detections line {}: {e}", i + 1)))
        })
        .collect()
}

/// DOTA-style export: eight coordinates, class name and score per line.
pub fn format_detections_dota(records: &[DetectionRecord], classes: &ClassTable) -> String {
    let mut s = String::new();
    for r in records {
        for [x, y] in r.corners {
            let _ = write!(s, "{x} {y} ");
        }
        let name = classes.name(r.class).map(str::to_string).unwrap_or_else(|| format!("class{}", r.class));
        let _ = writeln!(s, "{name} {}", r.score);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{obb_to_quad, ObbSpec};

    fn scene() -> Scene<f64> {
        let o = ObbSpec::from_direction(Point2::new(50.0, 40.0), 33.0, 60.0, 12.5).unwrap();
        let mut s = Scene::empty(128, 96);
        s.annotations.push(Annotation {
            quad: obb_to_quad(&o, 1).unwrap(),
            difficult: true,
        });
        s
    }

    #[test]
    fn scene_json_round_trip() {
        let s = scene();
        let f = SceneFile::from_scene(&s, &ClassTable::new(["a", "b"]));
        let text = serde_json::to_string(&f).unwrap();
        let back: SceneFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_scene::<f64>(), s);
    }

    #[test]
    fn dataset_and_single_scene_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset::new(&ClassTable::new(["a", "b"]));
        ds.push("img0", &scene());
        let p = dir.path().join("ds.json");
        std::fs::write(&p, serde_json::to_string(&ds).unwrap()).unwrap();
        assert_eq!(read_dataset(&p).unwrap(), ds);

        let p = dir.path().join("harbor_01.json");
        let f = SceneFile::from_scene(&scene(), &ClassTable::new(["a", "b"]));
        std::fs::write(&p, serde_json::to_string(&f).unwrap()).unwrap();
        let ds = read_dataset(&p).unwrap();
        assert_eq!(ds.images[0].id, "harbor_01");

        let mut bad = f.clone();
        bad.schema_version = 7;
        std::fs::write(&p, serde_json::to_string(&bad).unwrap()).unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Format(_))));
    }

    #[test]
    fn detections_jsonl_round_trip() {
        let q = scene().annotations[0].quad;
        let d = Detection {
            quad: q,
            class_id: 1,
            score: 0.75,
            provenance: Provenance::MatchedVertex,
        };
        let recs = vec![DetectionRecord::from_detection("img0", &d)];
        let text = write_detections_jsonl(&recs).unwrap();
        assert!(text.contains("\"provenance\":\"matched_vertex\""));
        let back = read_detections_jsonl(&text).unwrap();
        assert_eq!(back, recs);
        assert_eq!(back[0].to_detection::<f64>(), d);
        assert!(read_detections_jsonl("{nope").is_err());
        let dota = format_detections_dota(&recs, &ClassTable::new(["a", "b"]));
        assert!(dota.trim_end().ends_with("b 0.75"));
    }
}
