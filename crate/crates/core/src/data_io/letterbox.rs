use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::scalar::{cast, Real};

/// Aspect-preserving resize into a fixed canvas.
///
/// Source points map as `p · scale + offset`. [`letterbox`] always puts the
/// content at the canvas origin, so `offset` is zero and `pad_x`/`pad_y` are
/// the unfilled right/bottom margins. A non-zero offset describes centered or
/// otherwise shifted content.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LetterboxTransform {
    pub scale: f64,
    pub pad_x: f64,
    pub pad_y: f64,
    #[serde(default)]
    pub offset_x: f64,
    #[serde(default)]
    pub offset_y: f64,
    pub target_w: usize,
    pub target_h: usize,
}

impl LetterboxTransform {
    pub fn identity(target_w: usize, target_h: usize) -> Self {
        Self {
            scale: 1.0,
            pad_x: 0.0,
            pad_y: 0.0,
            offset_x: 0.0,
            offset_y: 0.0,
            target_w,
            target_h,
        }
    }

    pub fn apply<T: Real>(&self, p: Point2<T>) -> Point2<T> {
        let s: T = cast(self.scale);
        Point2::new(p.x * s + cast(self.offset_x), p.y * s + cast(self.offset_y))
    }

    pub fn invert<T: Real>(&self, p: Point2<T>) -> Point2<T> {
        let s: T = cast(self.scale);
        Point2::new((p.x - cast(self.offset_x)) / s, (p.y - cast(self.offset_y)) / s)
    }
}

/// Transform that fits `(width, height)` into `(target_w, target_h)`.
pub fn letterbox(width: usize, height: usize, target_w: usize, target_h: usize) -> Result<LetterboxTransform> {
    if width == 0 || height == 0 || target_w == 0 || target_h == 0 {
        return Err(Error::Config("letterbox dimensions must be positive".into()));
    }
    let (w, h) = (width as f64, height as f64);
    let (tw, th) = (target_w as f64, target_h as f64);
    let scale = (tw / w).min(th / h);
    Ok(LetterboxTransform {
        scale,
        pad_x: (tw - w * scale).max(0.0),
        pad_y: (th - h * scale).max(0.0),
        offset_x: 0.0,
        offset_y: 0.0,
        target_w,
        target_h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wide_image() {
        let t = letterbox(1600, 800, 800, 800).unwrap();
        assert_eq!(t.scale, 0.5);
        assert_eq!((t.pad_x, t.pad_y), (0.0, 400.0));
    }

    #[test]
    fn square_images() {
        assert_eq!(letterbox(800, 800, 800, 800).unwrap(), LetterboxTransform::identity(800, 800));
        let t = letterbox(300, 300, 800, 800).unwrap();
        assert!((t.scale - 8.0 / 3.0).abs() < 1e-15);
        assert!(t.pad_x.abs() < 1e-9 && t.pad_y.abs() < 1e-9);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(letterbox(0, 10, 800, 800).is_err());
    }

    proptest! {
        #[test]
        fn apply_invert_round_trip(
            w in 1usize..5000, h in 1usize..5000,
            x in -1e4f64..1e4, y in -1e4f64..1e4,
            ox in -500f64..500.0, oy in -500f64..500.0,
        ) {
            let mut t = letterbox(w, h, 800, 800).unwrap();
            prop_assert!(t.scale > 0.0);
            prop_assert!(w as f64 * t.scale <= 800.0 + 1e-9 && h as f64 * t.scale <= 800.0 + 1e-9);
            t.offset_x = ox;
            t.offset_y = oy;
            let p = Point2::new(x, y);
            let q = t.invert(t.apply(p));
            prop_assert!((q - p).norm() <= 1e-9 * (1.0 + p.norm()));
        }

        #[test]
        fn aspect_ratio_preserved(w in 1usize..5000, h in 1usize..5000, bw in 1f64..300.0, bh in 1f64..300.0) {
            let t = letterbox(w, h, 800, 800).unwrap();
            let a = t.apply(Point2::new(10.0, 20.0));
            let b = t.apply(Point2::new(10.0 + bw, 20.0 + bh));
            let ratio = (b.x - a.x) / (b.y - a.y);
            prop_assert!((ratio - bw / bh).abs() <= 1e-12 * (bw / bh).max(1.0));
        }
    }
}
