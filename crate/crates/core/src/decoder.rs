//! Inference-side assembly of oriented boxes from the five planes.
//!
//! Center peaks are the detection hypotheses. For each one the size,
//! offset and direction planes are read at the peak cell. In
//! [`DecodeMode::KeypointMatch`] the predicted direction is used to look for
//! a same-class vertex peak near the expected (shrunk) vertex; a match fixes
//! the box axis, otherwise the predicted direction is used as is.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data_io::LetterboxTransform;
use crate::error::{Error, Result};
use crate::geometry::{obb_to_quad, relative_direction, rotated_iou, ObbSpec, Point2, RotatedQuad};
use crate::plane::Plane;
use crate::scalar::Real;
use crate::target_codec::TargetMaps;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    AngleOnly,
    #[default]
    KeypointMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    MatchedVertex,
    DirectionFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig<T> {
    pub top_k: usize,
    pub score_threshold: T,
    /// Vertex search radius is `max(2, factor · h)` grid cells.
    pub match_radius_factor: T,
    pub mode: DecodeMode,
    pub nms_iou: T,
    pub vertex_shrink: T,
    /// Apply rotated NMS to single-image decodes as well.
    pub single_image_nms: bool,
}

impl<T: Real> Default for DecodeConfig<T> {
    fn default() -> Self {
        Self {
            top_k: 200,
            score_threshold: T::lit(0.25),
            match_radius_factor: T::lit(0.25),
            mode: DecodeMode::KeypointMatch,
            nms_iou: T::lit(0.5),
            vertex_shrink: T::lit(0.9),
            single_image_nms: false,
        }
    }
}

impl<T: Real> DecodeConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be >= 1".into()));
        }
        if !(self.score_threshold > T::zero() && self.score_threshold < T::one()) {
            return Err(Error::Config("score_threshold must lie in (0, 1)".into()));
        }
        if !(self.match_radius_factor >= T::zero()) {
            return Err(Error::Config("match_radius_factor must be non-negative".into()));
        }
        if !(self.vertex_shrink > T::zero() && self.vertex_shrink <= T::one()) {
            return Err(Error::Config("vertex_shrink must lie in (0, 1]".into()));
        }
        if !(self.nms_iou > T::zero() && self.nms_iou <= T::one()) {
            return Err(Error::Config("nms_iou must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak<T> {
    /// `(x, y)` grid cell.
    pub cell: (usize, usize),
    pub class_id: usize,
    pub score: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection<T> {
    pub quad: RotatedQuad<T>,
    pub class_id: usize,
    pub score: T,
    pub provenance: Provenance,
}

impl<T: Real> Detection<T> {
    pub fn translated(&self, offset: Point2<T>) -> Self {
        Self {
            quad: self.quad.translated(offset),
            ..*self
        }
    }
}

/// Beats `(y, x)` neighbor holding `other`: larger, or equal and earlier in
/// row-major order.
#[inline]
fn dominates<T: Real>(v: T, at: (usize, usize), other: T, other_at: (usize, usize)) -> bool {
    v > other || (v == other && at < other_at)
}

/// Local maxima of every channel of a heatmap.
///
/// A cell is kept when it beats all of its 3×3 neighbors (ties go to the
/// lexicographically smallest `(row, col)`) and its value reaches
/// `score_threshold`. Output is sorted by descending score, then class, row
/// and column, and truncated to `top_k`.
pub fn extract_peaks<T: Real>(plane: &Plane<T>, cfg: &DecodeConfig<T>) -> Vec<Peak<T>> {
    let (w, h) = (plane.width, plane.height);
    let mut peaks = Vec::new();
    for c in 0..plane.channels {
        let ch = plane.channel(c);
        for y in 0..h {
            for x in 0..w {
                let v = ch[y * w + x];
                if !(v >= cfg.score_threshold) {
                    continue;
                }
                let mut is_peak = true;
                'nb: for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        if (nx, ny) == (x, y) {
                            continue;
                        }
                        if !dominates(v, (y, x), ch[ny * w + nx], (ny, nx)) {
                            is_peak = false;
                            break 'nb;
                        }
                    }
                }
                if is_peak {
                    peaks.push(Peak {
                        cell: (x, y),
                        class_id: c,
                        score: v,
                    });
                }
            }
        }
    }
    peaks.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.class_id.cmp(&b.class_id))
            .then(a.cell.1.cmp(&b.cell.1))
            .then(a.cell.0.cmp(&b.cell.0))
    });
    peaks.truncate(cfg.top_k);
    peaks
}

fn cell_point<T: Real>(cell: (usize, usize)) -> Point2<T> {
    Point2::new(T::from_usize(cell.0).unwrap(), T::from_usize(cell.1).unwrap())
}

/// Assembles detections from predicted planes.
pub fn decode<T: Real>(maps: &TargetMaps<T>, cfg: &DecodeConfig<T>) -> Result<Vec<Detection<T>>> {
    cfg.validate()?;
    maps.check_shapes()?;
    let d = T::from_usize(maps.down_ratio.max(1)).unwrap();
    let centers = extract_peaks(&maps.center_hm, cfg);
    let vertices = match cfg.mode {
        DecodeMode::KeypointMatch => extract_peaks(&maps.vertex_hm, cfg),
        DecodeMode::AngleOnly => Vec::new(),
    };
    let mut used = vec![false; vertices.len()];
    let mut out = Vec::with_capacity(centers.len());
    for peak in &centers {
        let (x, y) = peak.cell;
        let w = maps.size_map.get(0, x, y);
        let h = maps.size_map.get(1, x, y);
        if !(w > T::zero() && h > T::zero()) || !w.is_finite() || !h.is_finite() {
            continue;
        }
        let theta = maps.direction_map.get(0, x, y);
        let cell = cell_point::<T>(peak.cell);
        let center = cell + Point2::new(maps.offset_map.get(0, x, y), maps.offset_map.get(1, x, y));
        let vertex_off = Point2::new(maps.offset_map.get(2, x, y), maps.offset_map.get(3, x, y));
        let (s, c) = theta.to_radians().sin_cos();
        let mut axis = Point2::new(c, s);
        let mut provenance = Provenance::DirectionFallback;

        if cfg.mode == DecodeMode::KeypointMatch {
            let expected = center + axis * (cfg.vertex_shrink * h * T::half());
            let radius = (cfg.match_radius_factor * h).max(T::two());
            let mut best: Option<(usize, T)> = None;
            for (i, v) in vertices.iter().enumerate() {
                if used[i] || v.class_id != peak.class_id {
                    continue;
                }
                let pos = cell_point::<T>(v.cell) + vertex_off;
                let dist = (pos - expected).norm();
                if dist <= radius && best.is_none_or(|(_, bd)| dist < bd) {
                    best = Some((i, dist));
                }
            }
            if let Some((i, _)) = best {
                let shrunk = cell_point::<T>(vertices[i].cell) + vertex_off;
                let vertex = center + (shrunk - center) * cfg.vertex_shrink.recip();
                let dir = vertex - center;
                let len = dir.norm();
                if len > T::zero() && len.is_finite() {
                    axis = dir * len.recip();
                    provenance = Provenance::MatchedVertex;
                    used[i] = true;
                }
            }
        }

        let center_px = center * d;
        let (h_px, w_px) = (h * d, w * d);
        let vertex_px = center_px + axis * (h_px * T::half());
        let obb = ObbSpec {
            center: center_px,
            vertex: vertex_px,
            h: h_px,
            w: w_px,
            theta: relative_direction(center_px, vertex_px)?,
        };
        let Ok(quad) = obb_to_quad(&obb, peak.class_id) else {
            continue;
        };
        out.push(Detection {
            quad,
            class_id: peak.class_id,
            score: peak.score,
            provenance,
        });
    }
    if cfg.single_image_nms {
        out = rotated_nms(out, cfg.nms_iou);
    }
    Ok(out)
}

/// Total order used for suppression: score descending, then class, center
/// x, center y and finally the raw corner coordinates.
pub fn detection_order<T: Real>(a: &Detection<T>, b: &Detection<T>) -> Ordering {
    let (ca, cb) = (a.quad.center(), b.quad.center());
    let tf = |v: T| v.to_f64_lossy();
    tf(b.score)
        .total_cmp(&tf(a.score))
        .then(a.class_id.cmp(&b.class_id))
        .then(tf(ca.x).total_cmp(&tf(cb.x)))
        .then(tf(ca.y).total_cmp(&tf(cb.y)))
        .then_with(|| {
            a.quad
                .coords()
                .iter()
                .zip(b.quad.coords().iter())
                .map(|(x, y)| tf(*x).total_cmp(&tf(*y)))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Greedy per-class rotated NMS: a detection is dropped when its IoU with an
/// already kept detection of the same class exceeds `iou_threshold`.
pub fn rotated_nms<T: Real>(mut dets: Vec<Detection<T>>, iou_threshold: T) -> Vec<Detection<T>> {
    dets.sort_by(detection_order);
    let mut kept: Vec<Detection<T>> = Vec::with_capacity(dets.len());
    for det in dets {
        let suppressed = kept.iter().any(|k| {
            k.class_id == det.class_id
                && rotated_iou(&k.quad, &det.quad)
                    .map(|r| r.iou > iou_threshold)
                    .unwrap_or(false)
        });
        if !suppressed {
            kept.push(det);
        }
    }
    kept
}

/// Shifts per-tile detections into source-image coordinates and suppresses
/// duplicates across tiles.
pub fn merge_tiles<T: Real>(
    per_tile: &[(Point2<T>, Vec<Detection<T>>)],
    cfg: &DecodeConfig<T>,
) -> Vec<Detection<T>> {
    let all: Vec<Detection<T>> = per_tile
        .iter()
        .flat_map(|(origin, dets)| dets.iter().map(move |d| d.translated(*origin)))
        .collect();
    rotated_nms(all, cfg.nms_iou)
}

/// Maps detections from letterboxed input coordinates back to the original
/// image frame.
pub fn unletterbox<T: Real>(dets: &[Detection<T>], transform: &LetterboxTransform) -> Vec<Detection<T>> {
    dets.iter()
        .map(|d| Detection {
            quad: d.quad.map_points(|p| transform.invert(p)),
            ..*d
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::quad_to_obb;
    use crate::target_codec::{encode_scene, heatmap_peak_truth, Annotation, EncoderConfig, PeakKind, Scene};

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    fn scene(obbs: &[(f64, f64, f64, f64, f64, usize)]) -> Scene<f64> {
        Scene {
            image_width: 256,
            image_height: 256,
            annotations: obbs
                .iter()
                .map(|&(x, y, th, h, w, c)| {
                    let o = ObbSpec::from_direction(p(x, y), th, h, w).unwrap();
                    Annotation::new(obb_to_quad(&o, c).unwrap())
                })
                .collect(),
        }
    }

    #[test]
    fn single_spike_is_one_peak() {
        let mut plane = Plane::<f64>::zeros(8, 8, 1);
        plane.set(0, 3, 4, 1.0);
        let peaks = extract_peaks(&plane, &DecodeConfig::default());
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].cell, (3, 4));
        assert!(extract_peaks(&Plane::<f64>::zeros(8, 8, 2), &DecodeConfig::default()).is_empty());
    }

    #[test]
    fn plateau_tie_goes_to_smallest_row_col() {
        let mut plane = Plane::<f64>::zeros(6, 6, 1);
        plane.set(0, 2, 2, 0.8);
        plane.set(0, 3, 2, 0.8);
        plane.set(0, 2, 3, 0.8);
        let peaks = extract_peaks(&plane, &DecodeConfig::default());
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].cell, (2, 2));
    }

    #[test]
    fn peaks_sorted_and_truncated() {
        let mut plane = Plane::<f64>::zeros(10, 10, 2);
        plane.set(0, 1, 1, 0.5);
        plane.set(0, 5, 5, 0.9);
        plane.set(1, 8, 1, 0.9);
        plane.set(1, 1, 8, 0.3);
        plane.set(0, 8, 8, 0.2);
        let cfg = DecodeConfig {
            top_k: 3,
            ..Default::default()
        };
        let peaks = extract_peaks(&plane, &cfg);
        let got: Vec<_> = peaks.iter().map(|p| (p.class_id, p.cell)).collect();
        assert_eq!(got, vec![(0, (5, 5)), (1, (8, 1)), (0, (1, 1))]);
    }

    #[test]
    fn encoded_peaks_match_truth() {
        let s = scene(&[
            (60.0, 60.0, 30.0, 80.0, 16.0, 0),
            (180.0, 80.0, 250.0, 60.0, 20.0, 0),
            (120.0, 190.0, 100.0, 40.0, 36.0, 0),
        ]);
        let maps = encode_scene(&s, &EncoderConfig::default()).unwrap();
        let truth: Vec<_> = heatmap_peak_truth(&maps)
            .into_iter()
            .filter(|p| p.kind == PeakKind::Center)
            .map(|p| p.cell)
            .collect();
        let mut found: Vec<_> = extract_peaks(&maps.center_hm, &DecodeConfig::default())
            .into_iter()
            .map(|p| p.cell)
            .collect();
        found.sort_by_key(|c| (c.1, c.0));
        assert_eq!(found, truth);
    }

    #[test]
    fn decode_recovers_encoded_boxes() {
        let s = scene(&[
            (60.5, 61.25, 30.0, 80.0, 16.0, 0),
            (180.0, 80.0, 250.0, 60.0, 20.0, 1),
            (120.0, 190.0, 100.0, 40.0, 36.0, 0),
        ]);
        let cfg = EncoderConfig {
            num_classes: 2,
            ..Default::default()
        };
        let maps = encode_scene(&s, &cfg).unwrap();
        for mode in [DecodeMode::KeypointMatch, DecodeMode::AngleOnly] {
            let dets = decode(
                &maps,
                &DecodeConfig {
                    mode,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(dets.len(), 3);
            for ann in &s.annotations {
                let best = dets
                    .iter()
                    .filter(|d| d.class_id == ann.class_id())
                    .map(|d| rotated_iou(&d.quad, &ann.quad).unwrap().iou)
                    .fold(0.0, f64::max);
                assert!(best > 0.999, "{mode:?}: {best}");
            }
            let expected = match mode {
                DecodeMode::KeypointMatch => Provenance::MatchedVertex,
                DecodeMode::AngleOnly => Provenance::DirectionFallback,
            };
            assert!(dets.iter().all(|d| d.provenance == expected));
        }
    }

    #[test]
    fn zeroed_vertex_plane_falls_back_to_direction() {
        let s = scene(&[(100.0, 100.0, 45.0, 90.0, 18.0, 0)]);
        let mut maps = encode_scene(&s, &EncoderConfig::default()).unwrap();
        maps.vertex_hm.data.iter_mut().for_each(|v| *v = 0.0);
        let dets = decode(&maps, &DecodeConfig::default()).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].provenance, Provenance::DirectionFallback);
        assert!(quad_to_obb(&dets[0].quad).is_ok());
        assert!(rotated_iou(&dets[0].quad, &s.annotations[0].quad).unwrap().iou > 0.999);
    }

    #[test]
    fn vertex_outside_image_falls_back() {
        let mut s = scene(&[(10.0, 100.0, 180.0, 60.0, 12.0, 0)]);
        s.image_width = 64;
        let maps = encode_scene(&s, &EncoderConfig::default()).unwrap();
        assert!(maps.vertex_hm.is_all_zero());
        let dets = decode(&maps, &DecodeConfig::default()).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].provenance, Provenance::DirectionFallback);
        assert!(rotated_iou(&dets[0].quad, &s.annotations[0].quad).unwrap().iou > 0.999);
    }

    #[test]
    fn empty_prediction_decodes_to_nothing() {
        let maps = TargetMaps::<f64>::zeros(32, 32, 1, 4);
        assert!(decode(&maps, &DecodeConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let mut maps = TargetMaps::<f64>::zeros(32, 32, 1, 4);
        maps.size_map = Plane::zeros(16, 32, 2);
        assert!(matches!(
            decode(&maps, &DecodeConfig::default()),
            Err(Error::Config(_))
        ));
    }

    fn det(x: f64, y: f64, score: f64) -> Detection<f64> {
        let o = ObbSpec::from_direction(p(x, y), 20.0, 40.0, 10.0).unwrap();
        Detection {
            quad: obb_to_quad(&o, 0).unwrap(),
            class_id: 0,
            score,
            provenance: Provenance::MatchedVertex,
        }
    }

    #[test]
    fn merge_single_tile_translates() {
        let cfg = DecodeConfig::default();
        let merged = merge_tiles(&[(p(100.0, 50.0), vec![det(10.0, 10.0, 0.9)])], &cfg);
        assert_eq!(merged.len(), 1);
        let c = merged[0].quad.center();
        assert!((c.x - 110.0).abs() < 1e-12 && (c.y - 60.0).abs() < 1e-12);
    }

    #[test]
    fn merge_suppresses_cross_tile_duplicates() {
        let cfg = DecodeConfig::default();
        let a = (p(0.0, 0.0), vec![det(900.0, 100.0, 0.8)]);
        let b = (p(824.0, 0.0), vec![det(76.0, 100.0, 0.9)]);
        let merged = merge_tiles(&[a.clone(), b.clone()], &cfg);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].score, 0.9);
        assert_eq!(merged, merge_tiles(&[b, a], &cfg));
    }

    #[test]
    fn unletterbox_examples() {
        let t = LetterboxTransform::identity(800, 800);
        let d = det(30.0, 40.0, 0.5);
        assert_eq!(unletterbox(&[d], &t)[0], d);

        let t = LetterboxTransform {
            scale: 0.5,
            offset_x: 0.0,
            offset_y: 100.0,
            pad_x: 0.0,
            pad_y: 200.0,
            target_w: 800,
            target_h: 800,
        };
        assert_eq!(t.invert(p(10.0, 110.0)), p(20.0, 20.0));
    }
}
