//! Oriented box representations and exact convex IoU.
//!
//! Two forms are used throughout the crate. [`RotatedQuad`] is the
//! dataset-native form: four corners, clockwise in image coordinates
//! (y pointing down). [`ObbSpec`] is the two-keypoint form: the box center,
//! the midpoint of the leading short edge ("vertex"), the long side `h`, the
//! short side `w` and the relative direction `theta` of the center→vertex
//! vector in degrees.
//!
//! Angles are measured on raw pixel deltas with no axis flip, so encode and
//! decode share one convention.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Area (px²) at or below which a box is considered degenerate.
pub const AREA_EPS: f64 = 1e-9;

/// Edge-length difference (px) below which a box is treated as square.
pub const SQUARE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    #[inline]
    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    #[inline]
    pub fn cross(self, other: Self) -> T {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    /// Counter-rotation by 90° in the math sense, `(-y, x)`.
    #[inline]
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    #[inline]
    pub fn midpoint(self, other: Self) -> Self {
        Self::new(
            (self.x + other.x) * T::half(),
            (self.y + other.y) * T::half(),
        )
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotates about the origin by `angle` radians.
    pub fn rotated(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn cast<U: Real>(self) -> Point2<U> {
        Point2::new(crate::scalar::cast(self.x), crate::scalar::cast(self.y))
    }
}

impl<T: Real> Add for Point2<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Real> Sub for Point2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Real> Mul<T> for Point2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: T) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

impl<T: Real> Neg for Point2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Signed shoelace area. Positive for clockwise order in image coordinates.
pub fn polygon_signed_area<T: Real>(points: &[Point2<T>]) -> T {
    let n = points.len();
    if n < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..n {
        acc = acc + points[i].cross(points[(i + 1) % n]);
    }
    acc * T::half()
}

/// Four ordered corners of an oriented box plus its class label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatedQuad<T> {
    pub corners: [Point2<T>; 4],
    pub class_id: usize,
}

impl<T: Real> RotatedQuad<T> {
    pub fn new(corners: [Point2<T>; 4], class_id: usize) -> Self {
        Self { corners, class_id }
    }

    pub fn from_coords(coords: [T; 8], class_id: usize) -> Self {
        let p = |i: usize| Point2::new(coords[2 * i], coords[2 * i + 1]);
        Self::new([p(0), p(1), p(2), p(3)], class_id)
    }

    pub fn coords(&self) -> [T; 8] {
        let c = &self.corners;
        [
            c[0].x, c[0].y, c[1].x, c[1].y, c[2].x, c[2].y, c[3].x, c[3].y,
        ]
    }

    pub fn signed_area(&self) -> T {
        polygon_signed_area(&self.corners)
    }

    pub fn area(&self) -> T {
        self.signed_area().abs()
    }

    /// Corner mean.
    pub fn center(&self) -> Point2<T> {
        let c = &self.corners;
        let q = T::lit(0.25);
        Point2::new(
            (c[0].x + c[1].x + c[2].x + c[3].x) * q,
            (c[0].y + c[1].y + c[2].y + c[3].y) * q,
        )
    }

    /// Midpoint of the leading edge (corner 1, corner 2).
    pub fn head_midpoint(&self) -> Point2<T> {
        self.corners[0].midpoint(self.corners[1])
    }

    /// Relative direction of the center→head-midpoint vector.
    pub fn head_direction(&self) -> Result<T> {
        relative_direction(self.center(), self.head_midpoint())
    }

    pub fn is_clockwise(&self) -> bool {
        self.signed_area() > T::zero()
    }

    /// Reorders to clockwise (image coordinates) while keeping the leading
    /// edge `{corner 1, corner 2}` first.
    pub fn to_clockwise(&self) -> Self {
        if self.signed_area() >= T::zero() {
            *self
        } else {
            let c = &self.corners;
            Self::new([c[1], c[0], c[3], c[2]], self.class_id)
        }
    }

    pub fn translated(&self, offset: Point2<T>) -> Self {
        self.map_points(|p| p + offset)
    }

    pub fn map_points(&self, f: impl Fn(Point2<T>) -> Point2<T>) -> Self {
        let c = &self.corners;
        Self::new([f(c[0]), f(c[1]), f(c[2]), f(c[3])], self.class_id)
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounds(&self) -> (Point2<T>, Point2<T>) {
        let mut lo = self.corners[0];
        let mut hi = self.corners[0];
        for p in &self.corners[1..] {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }

    pub fn is_finite(&self) -> bool {
        self.corners.iter().all(|p| p.is_finite())
    }

    pub fn is_convex(&self) -> bool {
        let c = &self.corners;
        let mut sign = 0i8;
        for i in 0..4 {
            let e0 = c[(i + 1) % 4] - c[i];
            let e1 = c[(i + 2) % 4] - c[(i + 1) % 4];
            let z = e0.cross(e1);
            let s = if z > T::zero() {
                1
            } else if z < T::zero() {
                -1
            } else {
                0
            };
            if s != 0 {
                if sign != 0 && s != sign {
                    return false;
                }
                sign = s;
            }
        }
        sign != 0
    }

    pub fn is_simple(&self) -> bool {
        let c = &self.corners;
        !segments_cross(c[0], c[1], c[2], c[3]) && !segments_cross(c[1], c[2], c[3], c[0])
    }

    /// Checks finiteness, simplicity and non-degenerate area.
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::DegenerateBox("non-finite corner".into()));
        }
        if !(self.area() > T::lit(AREA_EPS)) {
            return Err(Error::DegenerateBox(format!(
                "area {} at or below {AREA_EPS}",
                self.area()
            )));
        }
        if !self.is_simple() {
            return Err(Error::DegenerateBox("self-intersecting quad".into()));
        }
        Ok(())
    }

    /// Point-in-polygon for convex quads, boundary inclusive.
    pub fn contains(&self, p: Point2<T>) -> bool {
        let q = self.to_clockwise();
        let c = &q.corners;
        (0..4).all(|i| (c[(i + 1) % 4] - c[i]).cross(p - c[i]) >= T::zero())
    }

    pub fn cast<U: Real>(&self) -> RotatedQuad<U> {
        let c = &self.corners;
        RotatedQuad::new(
            [c[0].cast(), c[1].cast(), c[2].cast(), c[3].cast()],
            self.class_id,
        )
    }
}

fn segments_cross<T: Real>(a: Point2<T>, b: Point2<T>, c: Point2<T>, d: Point2<T>) -> bool {
    let d1 = (b - a).cross(c - a);
    let d2 = (b - a).cross(d - a);
    let d3 = (d - c).cross(a - c);
    let d4 = (d - c).cross(b - c);
    let z = T::zero();
    ((d1 > z && d2 < z) || (d1 < z && d2 > z)) && ((d3 > z && d4 < z) || (d3 < z && d4 > z))
}

/// Two-keypoint oriented box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObbSpec<T> {
    pub center: Point2<T>,
    pub vertex: Point2<T>,
    /// Long side, px.
    pub h: T,
    /// Short side, px.
    pub w: T,
    /// Relative direction of center→vertex, degrees in `[0, 360)`.
    pub theta: T,
}

impl<T: Real> ObbSpec<T> {
    /// Builds a spec whose vertex sits `h / 2` from the center along `theta`.
    pub fn from_direction(center: Point2<T>, theta_deg: T, h: T, w: T) -> Result<Self> {
        let (s, c) = theta_deg.to_radians().sin_cos();
        let half = h * T::half();
        let vertex = Point2::new(center.x + half * c, center.y + half * s);
        let theta = relative_direction(center, vertex)?;
        Ok(Self {
            center,
            vertex,
            h,
            w,
            theta,
        })
    }

    /// Unit vector from center toward vertex.
    pub fn axis(&self) -> Result<Point2<T>> {
        let d = self.vertex - self.center;
        let len = d.norm();
        if !(len > T::lit(AREA_EPS)) || !len.is_finite() {
            return Err(Error::DegenerateDirection);
        }
        Ok(d * len.recip())
    }

    pub fn area(&self) -> T {
        self.h * self.w
    }

    pub fn aspect_ratio(&self) -> T {
        self.h / self.w
    }

    /// Uniform scale about the origin (sizes scale too).
    pub fn scaled(&self, s: T) -> Self {
        Self {
            center: self.center * s,
            vertex: self.vertex * s,
            h: self.h * s,
            w: self.w * s,
            theta: self.theta,
        }
    }

    pub fn translated(&self, offset: Point2<T>) -> Self {
        Self {
            center: self.center + offset,
            vertex: self.vertex + offset,
            ..*self
        }
    }

    /// True when `p` lies inside (or on) the oriented rectangle.
    pub fn contains(&self, p: Point2<T>) -> bool {
        let Ok(u) = self.axis() else {
            return p == self.center;
        };
        let d = p - self.center;
        let along = d.dot(u).abs();
        let across = d.dot(u.perp()).abs();
        along <= self.h * T::half() && across <= self.w * T::half()
    }
}

/// Relative direction of `vertex` seen from `center`, degrees in `[0, 360)`.
///
/// `acos(Δx / |Δ|)` when `Δy ≥ 0`, `360 − acos(Δx / |Δ|)` otherwise. The four
/// quadrant cases of the defining formula share these two expressions.
pub fn relative_direction<T: Real>(center: Point2<T>, vertex: Point2<T>) -> Result<T> {
    let dx = vertex.x - center.x;
    let dy = vertex.y - center.y;
    let r = dx.hypot(dy);
    if !(r > T::zero()) || !r.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    let alpha = arccos_ratio(dx, dy, r).to_degrees();
    let full = T::lit(360.0);
    let theta = if dy >= T::zero() { alpha } else { full - alpha };
    Ok(if theta >= full { T::zero() } else { theta })
}

/// `acos(dx / r)` for `r = hypot(dx, dy)`.
///
/// Near `|dx / r| = 1` the direct `acos` loses digits to cancellation, so the
/// half-angle form `2·asin(sqrt((r − |dx|) / 2r))` is used there, with
/// `r − |dx|` rewritten as `dy² / (r + |dx|)`.
fn arccos_ratio<T: Real>(dx: T, dy: T, r: T) -> T {
    let cos = (dx / r).max(-T::one()).min(T::one());
    if cos.abs() <= T::half() {
        return cos.acos();
    }
    let ax = dx.abs();
    let gap = dy * dy / (r + ax);
    let half = (gap / (T::two() * r)).sqrt().min(T::one()).asin() * T::two();
    if dx > T::zero() {
        half
    } else {
        T::PI() - half
    }
}

/// Rotates corner order so the leading edge is a short edge.
fn short_edge_first<T: Real>(quad: &RotatedQuad<T>) -> RotatedQuad<T> {
    let c = &quad.corners;
    let first = ((c[1] - c[0]).norm() + (c[3] - c[2]).norm()) * T::half();
    let second = ((c[2] - c[1]).norm() + (c[0] - c[3]).norm()) * T::half();
    if first - second > T::lit(SQUARE_EPS) {
        RotatedQuad::new([c[1], c[2], c[3], c[0]], quad.class_id)
    } else {
        *quad
    }
}

/// Converts four corners into the two-keypoint form.
///
/// The center is the corner mean and the vertex the midpoint of the leading
/// edge. When the leading edge is the long one the corner order is rotated by
/// one first, so `h ≥ w` always holds for rectangles.
pub fn quad_to_obb<T: Real>(quad: &RotatedQuad<T>) -> Result<ObbSpec<T>> {
    quad.validate()?;
    let q = short_edge_first(quad);
    let center = q.center();
    let vertex = q.head_midpoint();
    let axis = vertex - center;
    let half_len = axis.norm();
    if !(half_len > T::lit(AREA_EPS)) {
        return Err(Error::DegenerateBox(
            "vertex coincides with center".into(),
        ));
    }
    let normal = (axis * half_len.recip()).perp();
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    for p in &q.corners {
        let s = (*p - center).dot(normal);
        lo = lo.min(s);
        hi = hi.max(s);
    }
    let theta = relative_direction(center, vertex)?;
    Ok(ObbSpec {
        center,
        vertex,
        h: half_len * T::two(),
        w: hi - lo,
        theta,
    })
}

/// Reconstructs clockwise corners from the two-keypoint form.
///
/// The long axis follows `vertex − center`; its length comes from `h`, not
/// from the vertex distance. Corner 1 is the vertex-side endpoint that comes
/// first in clockwise order, so corners 1 and 2 straddle the vertex.
pub fn obb_to_quad<T: Real>(obb: &ObbSpec<T>, class_id: usize) -> Result<RotatedQuad<T>> {
    let u = obb.axis().map_err(|_| {
        Error::DegenerateBox("vertex coincides with center".into())
    })?;
    if !(obb.w > T::zero()) || !(obb.h > T::zero()) {
        return Err(Error::DegenerateBox(format!(
            "non-positive size h={} w={}",
            obb.h, obb.w
        )));
    }
    let n = u.perp();
    let head = obb.center + u * (obb.h * T::half());
    let tail = obb.center - u * (obb.h * T::half());
    let side = n * (obb.w * T::half());
    Ok(RotatedQuad::new(
        [head - side, head + side, tail + side, tail - side],
        class_id,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IoUResult<T> {
    pub intersection_area: T,
    pub union_area: T,
    pub iou: T,
}

/// Sutherland–Hodgman clipping of a polygon by a convex polygon.
///
/// Both inputs must have non-negative signed area (clockwise in image
/// coordinates).
pub fn clip_convex<T: Real>(subject: &[Point2<T>], clip: &[Point2<T>]) -> Vec<Point2<T>> {
    let mut output: Vec<Point2<T>> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let edge = clip[(i + 1) % n] - a;
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let dc = edge.cross(cur - a);
            let dp = edge.cross(prev - a);
            let cur_in = dc >= T::zero();
            let prev_in = dp >= T::zero();
            if cur_in {
                if !prev_in {
                    output.push(segment_at(prev, cur, dp, dc));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_at(prev, cur, dp, dc));
            }
        }
    }
    output
}

#[inline]
fn segment_at<T: Real>(p: Point2<T>, q: Point2<T>, dp: T, dq: T) -> Point2<T> {
    let t = dp / (dp - dq);
    p + (q - p) * t
}

fn lex_cmp<T: Real>(a: &RotatedQuad<T>, b: &RotatedQuad<T>) -> std::cmp::Ordering {
    let (ca, cb) = (a.coords(), b.coords());
    for (x, y) in ca.iter().zip(cb.iter()) {
        let o = x.to_f64_lossy().total_cmp(&y.to_f64_lossy());
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// Exact intersection-over-union of two convex quads.
///
/// The operand order is canonicalized before clipping, so
/// `rotated_iou(a, b) == rotated_iou(b, a)` bit for bit.
pub fn rotated_iou<T: Real>(a: &RotatedQuad<T>, b: &RotatedQuad<T>) -> Result<IoUResult<T>> {
    for q in [a, b] {
        q.validate()?;
        if !q.is_convex() {
            return Err(Error::DegenerateBox("non-convex quad".into()));
        }
    }
    let (first, second) = if lex_cmp(a, b).is_le() { (a, b) } else { (b, a) };
    let p = first.to_clockwise();
    let q = second.to_clockwise();
    let area_p = p.signed_area();
    let area_q = q.signed_area();
    let inter = polygon_signed_area(&clip_convex(&p.corners, &q.corners))
        .max(T::zero())
        .min(area_p.min(area_q));
    let union = area_p + area_q - inter;
    let iou = if union > T::zero() {
        (inter / union).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    Ok(IoUResult {
        intersection_area: inter,
        union_area: union,
        iou,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    fn quad(c: [(f64, f64); 4]) -> RotatedQuad<f64> {
        RotatedQuad::new(c.map(|(x, y)| p(x, y)), 0)
    }

    fn aabb(x0: f64, y0: f64, x1: f64, y1: f64) -> RotatedQuad<f64> {
        quad([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    }

    fn same_corner_set(a: &RotatedQuad<f64>, b: &RotatedQuad<f64>, tol: f64) -> bool {
        a.corners
            .iter()
            .all(|pa| b.corners.iter().any(|pb| (*pa - *pb).norm() < tol))
    }

    #[test]
    fn direction_axes() {
        let o = p(0.0, 0.0);
        assert_eq!(relative_direction(o, p(1.0, 0.0)).unwrap(), 0.0);
        assert!((relative_direction(o, p(0.0, 1.0)).unwrap() - 90.0).abs() < 1e-12);
        assert!((relative_direction(o, p(-1.0, -1.0)).unwrap() - 225.0).abs() < 1e-12);
        assert!((relative_direction(o, p(-1.0, 0.0)).unwrap() - 180.0).abs() < 1e-12);
        assert!((relative_direction(o, p(0.0, -1.0)).unwrap() - 270.0).abs() < 1e-12);
    }

    #[test]
    fn direction_zero_vector_errors() {
        let o = p(3.0, 4.0);
        assert!(matches!(
            relative_direction(o, o),
            Err(Error::DegenerateDirection)
        ));
    }

    #[test]
    fn direction_stays_below_360_for_tiny_negative_dy() {
        let t = relative_direction(p(0.0, 0.0), p(1.0, -1e-300)).unwrap();
        assert!((0.0..360.0).contains(&t));
    }

    #[test]
    fn direction_matches_atan2_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20_000 {
            let d = p(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
            let ours = relative_direction(p(0.0, 0.0), d).unwrap();
            let oracle = d.y.atan2(d.x).to_degrees().rem_euclid(360.0);
            let diff = (ours - oracle).rem_euclid(360.0);
            assert!(diff.min(360.0 - diff) <= 1e-9, "{d:?}: {ours} vs {oracle}");
        }
    }

    #[test]
    fn symmetric_rectangle_to_obb() {
        let q = quad([(-1.0, 2.0), (1.0, 2.0), (1.0, -2.0), (-1.0, -2.0)]);
        let obb = quad_to_obb(&q).unwrap();
        assert_eq!(obb.center, p(0.0, 0.0));
        assert_eq!(obb.vertex, p(0.0, 2.0));
        assert_eq!(obb.h, 4.0);
        assert_eq!(obb.w, 2.0);
        assert!((obb.theta - 90.0).abs() < 1e-12);
    }

    #[test]
    fn unit_square_to_obb() {
        let obb = quad_to_obb(&aabb(0.0, 0.0, 1.0, 1.0)).unwrap();
        assert_eq!(obb.center, p(0.5, 0.5));
        assert_eq!(obb.vertex, p(0.5, 0.0));
        assert_eq!(obb.h, 1.0);
        assert_eq!(obb.w, 1.0);
    }

    #[test]
    fn long_leading_edge_is_rotated_to_short() {
        let obb = quad_to_obb(&aabb(0.0, 0.0, 10.0, 4.0)).unwrap();
        assert_eq!(obb.h, 10.0);
        assert_eq!(obb.w, 4.0);
        assert_eq!(obb.vertex, p(10.0, 2.0));
    }

    #[test]
    fn degenerate_quad_rejected() {
        let flat = quad([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        assert!(matches!(quad_to_obb(&flat), Err(Error::DegenerateBox(_))));
    }

    #[test]
    fn obb_to_quad_vertical() {
        let obb = ObbSpec {
            center: p(0.0, 0.0),
            vertex: p(0.0, 2.0),
            h: 4.0,
            w: 2.0,
            theta: 90.0,
        };
        let q = obb_to_quad(&obb, 0).unwrap();
        let expected = quad([(-1.0, 2.0), (1.0, 2.0), (1.0, -2.0), (-1.0, -2.0)]);
        assert!(same_corner_set(&q, &expected, 1e-12));
        assert!(q.is_clockwise());
        assert_eq!(q.head_midpoint(), obb.vertex);
        let back = quad_to_obb(&q).unwrap();
        assert!((back.center - obb.center).norm() < 1e-12);
        assert!((back.vertex - obb.vertex).norm() < 1e-12);
    }

    #[test]
    fn obb_to_quad_horizontal_exact_order() {
        let obb = ObbSpec {
            center: p(5.0, 5.0),
            vertex: p(7.0, 5.0),
            h: 4.0,
            w: 2.0,
            theta: 0.0,
        };
        let q = obb_to_quad(&obb, 3).unwrap();
        assert_eq!(
            q.corners,
            [p(7.0, 4.0), p(7.0, 6.0), p(3.0, 6.0), p(3.0, 4.0)]
        );
        assert_eq!(q.class_id, 3);
        assert!(q.is_clockwise());
    }

    #[test]
    fn square_round_trip() {
        let obb = ObbSpec::from_direction(p(10.0, 10.0), 33.0, 6.0, 6.0).unwrap();
        let q = obb_to_quad(&obb, 0).unwrap();
        let back = quad_to_obb(&q).unwrap();
        assert!((back.vertex - obb.vertex).norm() < 1e-9);
        assert!((back.h - 6.0).abs() < 1e-9 && (back.w - 6.0).abs() < 1e-9);
    }

    #[test]
    fn obb_to_quad_rejects_coincident_vertex() {
        let obb = ObbSpec {
            center: p(1.0, 1.0),
            vertex: p(1.0, 1.0),
            h: 4.0,
            w: 2.0,
            theta: 0.0,
        };
        assert!(matches!(obb_to_quad(&obb, 0), Err(Error::DegenerateBox(_))));
    }

    #[test]
    fn random_rectangle_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let c = p(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));
            let w = rng.gen_range(0.5..50.0);
            let h = w * rng.gen_range(1.0..12.0);
            let obb = ObbSpec::from_direction(c, rng.gen_range(0.0..360.0), h, w).unwrap();
            let q = obb_to_quad(&obb, 0).unwrap();
            let back = obb_to_quad(&quad_to_obb(&q).unwrap(), 0).unwrap();
            for (a, b) in q.corners.iter().zip(back.corners.iter()) {
                assert!((*a - *b).norm() < 1e-6);
            }
            let spec = quad_to_obb(&q).unwrap();
            assert!((spec.theta - obb.theta).abs() < 1e-9 || (spec.theta - obb.theta).abs() > 359.0);
            assert!(((spec.vertex - spec.center).norm() - spec.h / 2.0).abs() <= 1e-6 * spec.h);
        }
    }

    #[test]
    fn iou_identity_disjoint_and_offset() {
        let a = aabb(0.0, 0.0, 1.0, 1.0);
        assert_eq!(rotated_iou(&a, &a).unwrap().iou, 1.0);
        let far = aabb(5.0, 5.0, 6.0, 6.0);
        assert_eq!(rotated_iou(&a, &far).unwrap().iou, 0.0);
        let shifted = aabb(0.5, 0.0, 1.5, 1.0);
        let r = rotated_iou(&a, &shifted).unwrap();
        assert!((r.intersection_area - 0.5).abs() < 1e-15);
        assert!((r.union_area - 1.5).abs() < 1e-15);
        assert!((r.iou - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_orientation_agnostic() {
        let a = aabb(0.0, 0.0, 2.0, 2.0);
        let ccw = quad([(0.0, 0.0), (0.0, 2.0), (2.0, 2.0), (2.0, 0.0)]);
        assert_eq!(rotated_iou(&a, &ccw).unwrap().iou, 1.0);
    }

    #[test]
    fn iou_contained_box() {
        let outer = aabb(0.0, 0.0, 4.0, 4.0);
        let inner = aabb(1.0, 1.0, 2.0, 2.0);
        let r = rotated_iou(&outer, &inner).unwrap();
        assert!((r.iou - 1.0 / 16.0).abs() < 1e-15);
        assert!(r.union_area >= outer.area());
    }

    #[test]
    fn iou_rejects_degenerate_and_nonconvex() {
        let a = aabb(0.0, 0.0, 1.0, 1.0);
        let flat = quad([(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 0.0)]);
        assert!(rotated_iou(&a, &flat).is_err());
        let dart = quad([(0.0, 0.0), (2.0, 1.0), (4.0, 0.0), (2.0, 4.0)]);
        assert!(rotated_iou(&a, &dart).is_err());
    }

    #[test]
    fn iou_diamond_in_square() {
        let sq = aabb(-1.0, -1.0, 1.0, 1.0);
        let diamond = quad([(0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)]);
        let r = rotated_iou(&sq, &diamond).unwrap();
        assert!((r.iou - 0.5).abs() < 1e-15);
    }

    #[test]
    fn contains_boundary_inclusive() {
        let a = aabb(0.0, 0.0, 2.0, 1.0);
        assert!(a.contains(p(1.0, 0.5)));
        assert!(a.contains(p(2.0, 1.0)));
        assert!(!a.contains(p(2.1, 0.5)));
    }

    #[test]
    fn works_in_f32() {
        let a: RotatedQuad<f32> = aabb(0.0, 0.0, 1.0, 1.0).cast();
        let b: RotatedQuad<f32> = aabb(0.5, 0.0, 1.5, 1.0).cast();
        assert!((rotated_iou(&a, &b).unwrap().iou - 1.0 / 3.0).abs() < 1e-6);
    }
}
