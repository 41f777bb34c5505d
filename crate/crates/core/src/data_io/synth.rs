//! Seeded random scenes of non-overlapping rotated rectangles.
//!
//! The generator is ChaCha8 (`rand_chacha`) seeded with `seed_from_u64`.
//! Every draw is a `f64` in `[0, 1)` scaled by hand, so scenes are identical
//! on every platform for a given seed and spec.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clip_convex, obb_to_quad, polygon_signed_area, ObbSpec, Point2, RotatedQuad};
use crate::scalar::Real;
use crate::target_codec::{Annotation, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub image_width: usize,
    pub image_height: usize,
    pub min_instances: usize,
    pub max_instances: usize,
    pub num_classes: usize,
    /// Long side over short side.
    pub min_aspect: f64,
    pub max_aspect: f64,
    pub min_short_side: f64,
    pub max_short_side: f64,
    pub max_long_side: f64,
    /// Minimum distance between instance centers, pixels.
    pub min_center_separation: f64,
    /// Boxes are grown by this many pixels on every side before the overlap
    /// test.
    pub min_gap: f64,
    /// Minimum distance from any corner to the image border.
    pub border_margin: f64,
    /// Placement attempts per instance.
    pub max_attempts: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            image_width: 512,
            image_height: 512,
            min_instances: 1,
            max_instances: 20,
            num_classes: 1,
            min_aspect: 1.0,
            max_aspect: 12.0,
            min_short_side: 8.0,
            max_short_side: 32.0,
            max_long_side: 160.0,
            min_center_separation: 16.0,
            min_gap: 4.0,
            border_margin: 2.0,
            max_attempts: 2000,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth spec: {m}")));
        if self.image_width == 0 || self.image_height == 0 {
            return bad("image dimensions must be positive");
        }
        if self.min_instances > self.max_instances {
            return bad("min_instances exceeds max_instances");
        }
        if self.num_classes == 0 {
            return bad("num_classes must be >= 1");
        }
        if !(self.min_aspect >= 1.0 && self.min_aspect <= self.max_aspect) {
            return bad("aspect range must satisfy 1 <= min <= max");
        }
        if !(self.min_short_side > 0.0 && self.min_short_side <= self.max_short_side) {
            return bad("short side range must satisfy 0 < min <= max");
        }
        if !(self.max_long_side >= self.min_short_side * self.min_aspect) {
            return bad("max_long_side too small for the smallest box");
        }
        if !(self.min_center_separation >= 0.0 && self.min_gap >= 0.0 && self.border_margin >= 0.0) {
            return bad("separation, gap and margin must be non-negative");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be >= 1");
        }
        Ok(())
    }
}

struct Draw(ChaCha8Rng);

impl Draw {
    fn unit(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    fn index(&mut self, n: usize) -> usize {
        ((self.unit() * n as f64) as usize).min(n - 1)
    }
}

fn overlap_area(a: &RotatedQuad<f64>, b: &RotatedQuad<f64>) -> f64 {
    let (a, b) = (a.to_clockwise(), b.to_clockwise());
    polygon_signed_area(&clip_convex(&a.corners, &b.corners)).abs()
}

pub fn synth_scene<T: Real>(seed: u64, spec: &SynthSpec) -> Result<Scene<T>> {
    spec.validate()?;
    let mut rng = Draw(ChaCha8Rng::seed_from_u64(seed));
    let span = spec.max_instances - spec.min_instances + 1;
    let count = spec.min_instances + rng.index(span);
    let (iw, ih) = (spec.image_width as f64, spec.image_height as f64);
    let m = spec.border_margin;

    let mut placed: Vec<(ObbSpec<f64>, RotatedQuad<f64>, RotatedQuad<f64>)> = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while placed.len() < count {
        let mut ok = false;
        for _ in 0..spec.max_attempts {
            attempts += 1;
            let class_id = rng.index(spec.num_classes);
            let aspect = rng.range(spec.min_aspect, spec.max_aspect);
            let w_hi = spec.max_short_side.min(spec.max_long_side / aspect);
            if w_hi < spec.min_short_side {
                continue;
            }
            let w = rng.range(spec.min_short_side, w_hi);
            let h = w * aspect;
            let theta = rng.range(0.0, 360.0);
            let half = 0.5 * h.hypot(w);
            if iw - 2.0 * (m + half) < 0.0 || ih - 2.0 * (m + half) < 0.0 {
                continue;
            }
            let cx = rng.range(m + half, iw - m - half);
            let cy = rng.range(m + half, ih - m - half);
            let Ok(obb) = ObbSpec::from_direction(Point2::new(cx, cy), theta, h, w) else {
                continue;
            };
            let Ok(quad) = obb_to_quad(&obb, class_id) else {
                continue;
            };
            let (lo, hi) = quad.bounds();
            if lo.x < m || lo.y < m || hi.x > iw - m || hi.y > ih - m {
                continue;
            }
            let g = spec.min_gap;
            let grown = ObbSpec::from_direction(obb.center, theta, h + 2.0 * g, w + 2.0 * g)
                .and_then(|o| obb_to_quad(&o, class_id));
            let Ok(grown) = grown else {
                continue;
            };
            let clash = placed.iter().any(|(o, _, og)| {
                (o.center - obb.center).norm() < spec.min_center_separation || overlap_area(og, &grown) > 0.0
            });
            if clash {
                continue;
            }
            placed.push((obb, quad, grown));
            ok = true;
            break;
        }
        if !ok {
            return Err(Error::Placement {
                requested: count,
                placed: placed.len(),
                attempts,
            });
        }
    }

    let mut scene = Scene::empty(spec.image_width, spec.image_height);
    for (_, q, _) in placed {
        scene.annotations.push(Annotation::new(q.cast()));
    }
    Ok(scene)
}
