//! Plane files: one flat little-endian `f32` file per plane (`<name>.f32`,
//! channel-major `[C, H, W]`) and a `planes.json` sidecar.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::scalar::Real;
use crate::target_codec::{EncodeWarning, TargetMaps, PLANE_NAMES};

pub const PLANES_SCHEMA_VERSION: u32 = 1;
pub const SIDECAR_NAME: &str = "planes.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaneEntry {
    pub name: String,
    pub file: String,
    /// `[channels, height, width]`.
    pub shape: [usize; 3],
    pub byte_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanesSidecar {
    pub schema_version: u32,
    pub layout: String,
    pub dtype: String,
    pub down_ratio: usize,
    pub num_classes: usize,
    pub grid_width: usize,
    pub grid_height: usize,
    pub planes: Vec<PlaneEntry>,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub warnings: Vec<EncodeWarning>,
}

/// Writes `maps` into `dir`. Plane values are stored as `f32`.
pub fn write_planes<T: Real>(maps: &TargetMaps<T>, dir: &Path, config: serde_json::Value) -> Result<PlanesSidecar> {
    maps.check_shapes()?;
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (name, plane) in maps.planes() {
        let mut bytes = Vec::with_capacity(plane.data.len() * 4);
        for v in &plane.data {
            bytes.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
        let file = format!("{name}.f32");
        write_atomic(&dir.join(&file), &bytes)?;
        entries.push(PlaneEntry {
            name: name.to_string(),
            file,
            shape: plane.shape(),
            byte_len: bytes.len(),
        });
    }
    let sidecar = PlanesSidecar {
        schema_version: PLANES_SCHEMA_VERSION,
        layout: "chw".into(),
        dtype: "f32le".into(),
        down_ratio: maps.down_ratio,
        num_classes: maps.num_classes,
        grid_width: maps.grid_width(),
        grid_height: maps.grid_height(),
        planes: entries,
        config,
        warnings: maps.warnings.clone(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    write_atomic(&dir.join(SIDECAR_NAME), text.as_bytes())?;
    Ok(sidecar)
}

fn format_err(msg: String) -> Error {
    Error::Format(msg)
}

/// Reads planes written by [`write_planes`].
pub fn read_planes(dir: &Path) -> Result<(TargetMaps<f32>, PlanesSidecar)> {
    let text = fs::read_to_string(dir.join(SIDECAR_NAME))?;
    let sidecar: PlanesSidecar =
        serde_json::from_str(&text).map_err(|e| format_err(format!("invalid sidecar: {e}")))?;
    if sidecar.schema_version != PLANES_SCHEMA_VERSION {
        return Err(format_err(format!("unsupported schema_version {}", sidecar.schema_version)));
    }
    if sidecar.layout != "chw" || sidecar.dtype != "f32le" {
        return Err(format_err(format!(
            "unsupported layout/dtype {}/{}",
            sidecar.layout, sidecar.dtype
        )));
    }
    let (w, h, c) = (sidecar.grid_width, sidecar.grid_height, sidecar.num_classes);
    let expected = [c, c, 2, 4, 1, 1];
    let mut planes: Vec<Plane<f32>> = Vec::with_capacity(6);
    for (k, name) in PLANE_NAMES.iter().enumerate() {
        let entry = sidecar
            .planes
            .iter()
            .find(|e| e.name == *name)
            .ok_or_else(|| format_err(format!("sidecar lists no plane {name}")))?;
        let shape = [expected[k], h, w];
        if entry.shape != shape {
            return Err(format_err(format!(
                "plane {name}: sidecar shape {:?} disagrees with grid {shape:?}",
                entry.shape
            )));
        }
        let n = shape.iter().product::<usize>();
        if entry.byte_len != n * 4 {
            return Err(format_err(format!(
                "plane {name}: byte_len {} does not match shape ({} bytes)",
                entry.byte_len,
                n * 4
            )));
        }
        if entry.file.contains(['/', '\\']) || entry.file.starts_with("..") {
            return Err(format_err(format!("plane {name}: file must be a plain name")));
        }
        let bytes = fs::read(dir.join(&entry.file))?;
        if bytes.len() != entry.byte_len {
            return Err(format_err(format!(
                "plane {name}: file has {} bytes, sidecar says {}",
                bytes.len(),
                entry.byte_len
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        planes.push(Plane::from_vec(w, h, expected[k], data).expect("length checked"));
    }
    let mut it = planes.into_iter();
    let mut next = || it.next().unwrap();
    let maps = TargetMaps {
        down_ratio: sidecar.down_ratio,
        num_classes: c,
        center_hm: next(),
        vertex_hm: next(),
        size_map: next(),
        offset_map: next(),
        direction_map: next(),
        pos_mask: next(),
        warnings: sidecar.warnings.clone(),
    };
    Ok((maps, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{obb_to_quad, ObbSpec, Point2};
    use crate::target_codec::{encode_scene, Annotation, EncoderConfig, Scene};

    fn maps() -> TargetMaps<f32> {
        let mut s = Scene::<f64>::empty(120, 80);
        for (x, y, t) in [(30.0, 30.0, 20.0), (90.0, 50.0, 200.0)] {
            let o = ObbSpec::from_direction(Point2::new(x, y), t, 40.0, 9.0).unwrap();
            s.annotations.push(Annotation::new(obb_to_quad(&o, 0).unwrap()));
        }
        encode_scene(&s, &EncoderConfig::default()).unwrap().cast()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = maps();
        let written = write_planes(&m, dir.path(), serde_json::json!({"mu": 0.125})).unwrap();
        let (back, sidecar) = read_planes(dir.path()).unwrap();
        assert_eq!(sidecar, written);
        for ((_, a), (_, b)) in m.planes().iter().zip(back.planes().iter()) {
            let ab: Vec<u32> = a.data.iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        assert_eq!(back, m);
    }

    #[test]
    fn truncated_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        write_planes(&maps(), dir.path(), serde_json::Value::Null).unwrap();
        let p = dir.path().join("size_map.f32");
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_planes(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn sidecar_length_mismatch_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut sc = write_planes(&maps(), dir.path(), serde_json::Value::Null).unwrap();
        sc.planes[1].byte_len += 4;
        std::fs::write(dir.path().join(SIDECAR_NAME), serde_json::to_string(&sc).unwrap()).unwrap();
        assert!(matches!(read_planes(dir.path()), Err(Error::Format(_))));

        sc.planes[1].byte_len -= 4;
        sc.grid_width += 1;
        std::fs::write(dir.path().join(SIDECAR_NAME), serde_json::to_string(&sc).unwrap()).unwrap();
        assert!(matches!(read_planes(dir.path()), Err(Error::Format(_))));
    }
}
