use serde::{Deserialize, Serialize};

use super::Diagnostic;
use crate::error::{Error, Result};
use crate::geometry::{clip_convex, polygon_signed_area, Point2, RotatedQuad};
use crate::scalar::Real;
use crate::target_codec::Scene;

/// Overlapping square tiles covering an image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub tile_size: usize,
    pub gap: usize,
    pub image_width: usize,
    pub image_height: usize,
    /// Row-major `(x, y)` tile origins.
    pub origins: Vec<(usize, usize)>,
}

impl TileGrid {
    pub fn stride(&self) -> usize {
        self.tile_size - self.gap
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

fn axis_origins(dim: usize, tile: usize, stride: usize) -> Vec<usize> {
    if dim <= tile {
        return vec![0];
    }
    let mut out = Vec::new();
    let mut x = 0;
    while x + tile < dim {
        out.push(x);
        x += stride;
    }
    let last = dim - tile;
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

pub fn tile_grid(image_width: usize, image_height: usize, tile_size: usize, gap: usize) -> Result<TileGrid> {
    if tile_size == 0 || gap >= tile_size {
        return Err(Error::Config(format!(
            "tile_size ({tile_size}) must exceed gap ({gap})"
        )));
    }
    let stride = tile_size - gap;
    let xs = axis_origins(image_width, tile_size, stride);
    let ys = axis_origins(image_height, tile_size, stride);
    let origins = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    Ok(TileGrid {
        tile_size,
        gap,
        image_width,
        image_height,
        origins,
    })
}

/// Annotations of `scene` that fall into the window at `origin`, shifted into
/// window coordinates.
///
/// An annotation is kept when at least `min_area_fraction` of its area lies
/// inside the window; the full quad is kept, not the clipped polygon.
pub fn crop_scene<T: Real>(
    scene: &Scene<T>,
    origin: (usize, usize),
    size: (usize, usize),
    min_area_fraction: T,
) -> (Scene<T>, Vec<Diagnostic>) {
    let ox = T::from_usize(origin.0).unwrap();
    let oy = T::from_usize(origin.1).unwrap();
    let sw = T::from_usize(size.0).unwrap();
    let sh = T::from_usize(size.1).unwrap();
    let window = [
        Point2::new(ox, oy),
        Point2::new(ox + sw, oy),
        Point2::new(ox + sw, oy + sh),
        Point2::new(ox, oy + sh),
    ];
    let shift = Point2::new(-ox, -oy);
    let mut out = Scene::empty(size.0, size.1);
    let mut diags = Vec::new();
    for (index, ann) in scene.annotations.iter().enumerate() {
        let (lo, hi) = ann.quad.bounds();
        if hi.x <= ox || hi.y <= oy || lo.x >= ox + sw || lo.y >= oy + sh {
            continue;
        }
        let area = ann.quad.area();
        let inside = clipped_area(&ann.quad, &window);
        if area > T::zero() && inside >= min_area_fraction * area {
            let mut a = *ann;
            a.quad = ann.quad.translated(shift);
            out.annotations.push(a);
        } else {
            diags.push(Diagnostic::Dropped {
                index,
                reason: format!(
                    "only {:.1}% of the area lies inside the window",
                    (inside / area).to_f64_lossy() * 100.0
                ),
            });
        }
    }
    (out, diags)
}

fn clipped_area<T: Real>(quad: &RotatedQuad<T>, window: &[Point2<T>; 4]) -> T {
    let q = quad.to_clockwise();
    polygon_signed_area(&clip_convex(&q.corners, window)).abs()
}
