//! Ground-truth encoding into the five dense training planes.
//!
//! Per annotated instance the encoder writes
//!
//! * a center heatmap peak (solar-corona or Gaussian bump) in the class plane,
//! * a vertex heatmap peak around the shrunk vertex `c + s·(t − c)`,
//! * `(w, h)` in output-grid units at the center peak cell,
//! * the fractional center and shrunk-vertex offsets at the center peak cell,
//! * the relative direction (degrees) at the center peak cell.
//!
//! All heatmap distances are measured in output-grid units. Bumps are drawn
//! around the integer peak cell so that the peak holds exactly `1.0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{quad_to_obb, relative_direction, ObbSpec, Point2, RotatedQuad};
use crate::plane::Plane;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapKind {
    #[default]
    SolarCorona,
    Gaussian,
}

/// How a side length enters the exponent denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExtentMode {
    /// `μ·len`, the literal form.
    #[default]
    Linear,
    /// `μ·len²`, experimental.
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig<T> {
    pub down_ratio: usize,
    pub mu: T,
    pub num_classes: usize,
    pub heatmap_kind: HeatmapKind,
    /// Gaussian baseline: `σ = gaussian_sigma_rule · w` in grid units.
    pub gaussian_sigma_rule: T,
    pub vertex_shrink: T,
    /// Heatmap values below this are stored as zero.
    pub value_floor: T,
    pub extent_mode: ExtentMode,
}

impl<T: Real> Default for EncoderConfig<T> {
    fn default() -> Self {
        Self {
            down_ratio: 4,
            mu: T::lit(0.125),
            num_classes: 1,
            heatmap_kind: HeatmapKind::SolarCorona,
            gaussian_sigma_rule: T::lit(1.0 / 6.0),
            vertex_shrink: T::lit(0.9),
            value_floor: T::lit(1e-4),
            extent_mode: ExtentMode::Linear,
        }
    }
}

impl<T: Real> EncoderConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.down_ratio < 1 {
            return Err(Error::Config("down_ratio must be >= 1".into()));
        }
        if !(self.mu > T::zero()) {
            return Err(Error::Config("mu must be positive".into()));
        }
        if !(self.vertex_shrink > T::zero() && self.vertex_shrink <= T::one()) {
            return Err(Error::Config("vertex_shrink must lie in (0, 1]".into()));
        }
        if !(self.gaussian_sigma_rule > T::zero()) {
            return Err(Error::Config("gaussian_sigma_rule must be positive".into()));
        }
        if !(self.value_floor > T::zero() && self.value_floor < T::one()) {
            return Err(Error::Config("value_floor must lie in (0, 1)".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation<T> {
    pub quad: RotatedQuad<T>,
    #[serde(default)]
    pub difficult: bool,
}

impl<T: Real> Annotation<T> {
    pub fn new(quad: RotatedQuad<T>) -> Self {
        Self {
            quad,
            difficult: false,
        }
    }

    pub fn class_id(&self) -> usize {
        self.quad.class_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene<T> {
    pub image_width: usize,
    pub image_height: usize,
    pub annotations: Vec<Annotation<T>>,
}

impl<T: Real> Scene<T> {
    pub fn empty(image_width: usize, image_height: usize) -> Self {
        Self {
            image_width,
            image_height,
            annotations: Vec::new(),
        }
    }

    pub fn quads(&self) -> impl Iterator<Item = &RotatedQuad<T>> {
        self.annotations.iter().map(|a| &a.quad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakKind {
    Center,
    Vertex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PeakTruth {
    pub kind: PeakKind,
    pub class_id: usize,
    /// `(x, y)` output-grid cell.
    pub cell: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum EncodeWarning {
    /// Short or long side under one output cell.
    TinyInstance { index: usize },
    /// Quad extends beyond the image; its peak cells were clamped.
    ClampedAnnotation { index: usize },
    /// Two instances map to the same peak cell. `kept` owns the regression
    /// values (larger area, then lower index).
    PeakCollision {
        kind: PeakKind,
        cell: (usize, usize),
        kept: usize,
        merged: usize,
    },
    /// Instance not encoded.
    Skipped { index: usize, reason: String },
}

/// Encoded training targets.
///
/// Heatmaps have one channel per class. `size_map` holds `(w, h)`,
/// `offset_map` holds `(cx, cy, tx, ty)` fractional parts, `direction_map`
/// the relative direction in degrees and `pos_mask` a `1` at every center
/// peak cell that carries regression targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMaps<T> {
    pub down_ratio: usize,
    pub num_classes: usize,
    pub center_hm: Plane<T>,
    pub vertex_hm: Plane<T>,
    pub size_map: Plane<T>,
    pub offset_map: Plane<T>,
    pub direction_map: Plane<T>,
    pub pos_mask: Plane<T>,
    #[serde(default)]
    pub warnings: Vec<EncodeWarning>,
}

pub const PLANE_NAMES: [&str; 6] = [
    "center_hm",
    "vertex_hm",
    "size_map",
    "offset_map",
    "direction_map",
    "pos_mask",
];

impl<T: Real> TargetMaps<T> {
    pub fn zeros(grid_width: usize, grid_height: usize, num_classes: usize, down_ratio: usize) -> Self {
        Self {
            down_ratio,
            num_classes,
            center_hm: Plane::zeros(grid_width, grid_height, num_classes),
            vertex_hm: Plane::zeros(grid_width, grid_height, num_classes),
            size_map: Plane::zeros(grid_width, grid_height, 2),
            offset_map: Plane::zeros(grid_width, grid_height, 4),
            direction_map: Plane::zeros(grid_width, grid_height, 1),
            pos_mask: Plane::zeros(grid_width, grid_height, 1),
            warnings: Vec::new(),
        }
    }

    pub fn grid_width(&self) -> usize {
        self.center_hm.width
    }

    pub fn grid_height(&self) -> usize {
        self.center_hm.height
    }

    pub fn planes(&self) -> [(&'static str, &Plane<T>); 6] {
        [
            (PLANE_NAMES[0], &self.center_hm),
            (PLANE_NAMES[1], &self.vertex_hm),
            (PLANE_NAMES[2], &self.size_map),
            (PLANE_NAMES[3], &self.offset_map),
            (PLANE_NAMES[4], &self.direction_map),
            (PLANE_NAMES[5], &self.pos_mask),
        ]
    }

    /// Checks that all planes agree on the grid and channel counts.
    pub fn check_shapes(&self) -> Result<()> {
        let (w, h) = (self.grid_width(), self.grid_height());
        let expected = [
            self.num_classes,
            self.num_classes,
            2,
            4,
            1,
            1,
        ];
        for ((name, plane), ch) in self.planes().iter().zip(expected) {
            if plane.width != w || plane.height != h || plane.channels != ch {
                return Err(Error::Config(format!(
                    "plane {name} has shape {:?}, expected [{ch}, {h}, {w}]",
                    plane.shape()
                )));
            }
            if plane.data.len() != w * h * ch {
                return Err(Error::Config(format!("plane {name} has wrong data length")));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> TargetMaps<U> {
        TargetMaps {
            down_ratio: self.down_ratio,
            num_classes: self.num_classes,
            center_hm: self.center_hm.cast(),
            vertex_hm: self.vertex_hm.cast(),
            size_map: self.size_map.cast(),
            offset_map: self.offset_map.cast(),
            direction_map: self.direction_map.cast(),
            pos_mask: self.pos_mask.cast(),
            warnings: self.warnings.clone(),
        }
    }
}

#[inline]
fn extent<T: Real>(mu: T, len: T, mode: ExtentMode) -> T {
    match mode {
        ExtentMode::Linear => mu * len,
        ExtentMode::Squared => mu * len * len,
    }
}

/// Solar-corona center confidence with the literal `μ·len` denominators.
///
/// `½(exp(−D²/(μh)) + exp(−D²/(μw)))` inside the oriented rectangle of
/// `obb`, zero outside. `p`, `obb` and the sizes share one unit.
pub fn sch_center_value<T: Real>(p: Point2<T>, obb: &ObbSpec<T>, mu: T) -> T {
    corona_value(p, obb, mu, ExtentMode::Linear)
}

pub fn corona_value<T: Real>(p: Point2<T>, obb: &ObbSpec<T>, mu: T, mode: ExtentMode) -> T {
    if !obb.contains(p) {
        return T::zero();
    }
    let (long, short) = if obb.h >= obb.w { (obb.h, obb.w) } else { (obb.w, obb.h) };
    let d2 = (p - obb.center).norm_sq();
    let a = (-d2 / extent(mu, long, mode)).exp();
    let b = (-d2 / extent(mu, short, mode)).exp();
    (a + b) * T::half()
}

/// Vertex confidence `exp(−|p − t|²/(μh))`.
pub fn vertex_value<T: Real>(p: Point2<T>, vertex: Point2<T>, h: T, mu: T) -> T {
    vertex_value_with(p, vertex, h, mu, ExtentMode::Linear)
}

pub fn vertex_value_with<T: Real>(p: Point2<T>, vertex: Point2<T>, h: T, mu: T, mode: ExtentMode) -> T {
    (-(p - vertex).norm_sq() / extent(mu, h, mode)).exp()
}

/// Isotropic Gaussian bump `exp(−|p − c|²/(2σ²))`.
pub fn gaussian_value<T: Real>(p: Point2<T>, center: Point2<T>, sigma: T) -> T {
    (-(p - center).norm_sq() / (T::two() * sigma * sigma)).exp()
}

/// Radius (grid cells) beyond which `exp(−D²/denom)` drops below `floor`.
fn cutoff_radius<T: Real>(denom: T, floor: T) -> T {
    (denom * (-floor.ln())).sqrt()
}

fn grid_cell<T: Real>(p: Point2<T>, gw: usize, gh: usize) -> Option<(usize, usize)> {
    let (x, y) = (p.x.floor(), p.y.floor());
    if !(x >= T::zero() && y >= T::zero()) {
        return None;
    }
    let (x, y) = (x.to_usize()?, y.to_usize()?);
    (x < gw && y < gh).then_some((x, y))
}

fn clamp_cell<T: Real>(v: T, len: usize) -> usize {
    let f = v.floor();
    if f < T::zero() {
        0
    } else {
        f.to_usize().unwrap_or(usize::MAX).min(len - 1)
    }
}

fn cell_point<T: Real>(x: usize, y: usize) -> Point2<T> {
    Point2::new(T::from_usize(x).unwrap(), T::from_usize(y).unwrap())
}

/// Inclusive cell range covering `[lo, hi]`, clipped to the grid.
fn cell_span<T: Real>(lo: T, hi: T, len: usize) -> Option<(usize, usize)> {
    let lo = lo.ceil().max(T::zero());
    let hi = hi.floor().min(T::from_usize(len - 1).unwrap());
    if hi < lo {
        return None;
    }
    Some((lo.to_usize()?, hi.to_usize()?))
}

struct Instance<T> {
    index: usize,
    class_id: usize,
    grid: ObbSpec<T>,
    center_cell: (usize, usize),
    /// `None` when the shrunk vertex falls outside the grid.
    vertex_cell: Option<(usize, usize)>,
    shrunk_vertex: Point2<T>,
    direction: T,
}

/// Encodes a scene into training targets.
///
/// The grid is `ceil(W / d) × ceil(H / d)`, which is the same as padding the
/// image to a multiple of `d`.
pub fn encode_scene<T: Real>(scene: &Scene<T>, cfg: &EncoderConfig<T>) -> Result<TargetMaps<T>> {
    cfg.validate()?;
    if scene.image_width == 0 || scene.image_height == 0 {
        return Err(Error::Config("image dimensions must be positive".into()));
    }
    let d = cfg.down_ratio;
    let gw = scene.image_width.div_ceil(d);
    let gh = scene.image_height.div_ceil(d);
    let mut maps = TargetMaps::zeros(gw, gh, cfg.num_classes, d);
    let inv_d = T::one() / T::from_usize(d).unwrap();
    let img_w = T::from_usize(scene.image_width).unwrap();
    let img_h = T::from_usize(scene.image_height).unwrap();

    let mut instances = Vec::with_capacity(scene.annotations.len());
    for (index, ann) in scene.annotations.iter().enumerate() {
        let class_id = ann.class_id();
        if class_id >= cfg.num_classes {
            return Err(Error::Config(format!(
                "annotation {index} has class {class_id} but num_classes = {}",
                cfg.num_classes
            )));
        }
        let obb = match quad_to_obb(&ann.quad) {
            Ok(o) => o,
            Err(e) => {
                maps.warnings.push(EncodeWarning::Skipped {
                    index,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let c = obb.center;
        if !(c.x >= T::zero() && c.y >= T::zero() && c.x <= img_w && c.y <= img_h) {
            maps.warnings.push(EncodeWarning::Skipped {
                index,
                reason: "center outside image".into(),
            });
            continue;
        }
        let (lo, hi) = ann.quad.bounds();
        if lo.x < T::zero() || lo.y < T::zero() || hi.x > img_w || hi.y > img_h {
            maps.warnings.push(EncodeWarning::ClampedAnnotation { index });
        }
        let grid = obb.scaled(inv_d);
        if grid.w < T::one() || grid.h < T::one() {
            maps.warnings.push(EncodeWarning::TinyInstance { index });
        }
        let shrunk = c + (obb.vertex - c) * cfg.vertex_shrink;
        let direction = relative_direction(c, shrunk)?;
        let shrunk_grid = shrunk * inv_d;
        instances.push(Instance {
            index,
            class_id,
            center_cell: (clamp_cell(grid.center.x, gw), clamp_cell(grid.center.y, gh)),
            vertex_cell: grid_cell(shrunk_grid, gw, gh),
            shrunk_vertex: shrunk_grid,
            grid,
            direction,
        });
    }

    for inst in &instances {
        draw_center(&mut maps.center_hm, inst, cfg);
        draw_vertex(&mut maps.vertex_hm, inst, cfg);
    }

    // Regression targets: larger area first, lower index on ties.
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by(|&a, &b| {
        let (ia, ib) = (&instances[a], &instances[b]);
        ib.grid
            .area()
            .partial_cmp(&ia.grid.area())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ia.index.cmp(&ib.index))
    });
    let mut center_owner: Vec<Option<usize>> = vec![None; gw * gh];
    let mut vertex_owner: Vec<Option<usize>> = vec![None; gw * gh * cfg.num_classes];
    for &k in &order {
        let inst = &instances[k];
        let (cx, cy) = inst.center_cell;
        let slot = cy * gw + cx;
        match center_owner[slot] {
            Some(kept) => maps.warnings.push(EncodeWarning::PeakCollision {
                kind: PeakKind::Center,
                cell: (cx, cy),
                kept,
                merged: inst.index,
            }),
            None => {
                center_owner[slot] = Some(inst.index);
                let cell = cell_point::<T>(cx, cy);
                let off_c = inst.grid.center - cell;
                let off_t = inst.shrunk_vertex
                    - Point2::new(
                        inst.shrunk_vertex.x.floor(),
                        inst.shrunk_vertex.y.floor(),
                    );
                maps.size_map.set(0, cx, cy, inst.grid.w);
                maps.size_map.set(1, cx, cy, inst.grid.h);
                maps.offset_map.set(0, cx, cy, off_c.x);
                maps.offset_map.set(1, cx, cy, off_c.y);
                maps.offset_map.set(2, cx, cy, off_t.x);
                maps.offset_map.set(3, cx, cy, off_t.y);
                maps.direction_map.set(0, cx, cy, inst.direction);
                maps.pos_mask.set(0, cx, cy, T::one());
            }
        }
        let Some((vx, vy)) = inst.vertex_cell else {
            continue;
        };
        let vslot = (inst.class_id * gh + vy) * gw + vx;
        match vertex_owner[vslot] {
            Some(kept) => maps.warnings.push(EncodeWarning::PeakCollision {
                kind: PeakKind::Vertex,
                cell: (vx, vy),
                kept,
                merged: inst.index,
            }),
            None => vertex_owner[vslot] = Some(inst.index),
        }
    }
    Ok(maps)
}

fn draw_center<T: Real>(plane: &mut Plane<T>, inst: &Instance<T>, cfg: &EncoderConfig<T>) {
    let (cx, cy) = inst.center_cell;
    let peak = cell_point::<T>(cx, cy);
    let (gw, gh) = (plane.width, plane.height);
    match cfg.heatmap_kind {
        HeatmapKind::SolarCorona => {
            let snapped = inst.grid.translated(peak - inst.grid.center);
            let long = inst.grid.h.max(inst.grid.w);
            let reach = cutoff_radius(extent(cfg.mu, long, cfg.extent_mode), cfg.value_floor)
                .min((long * long + inst.grid.w.min(inst.grid.h).powi(2)).sqrt() * T::half());
            let Some((x0, x1)) = cell_span(peak.x - reach, peak.x + reach, gw) else {
                return;
            };
            let Some((y0, y1)) = cell_span(peak.y - reach, peak.y + reach, gh) else {
                return;
            };
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let v = corona_value(cell_point(x, y), &snapped, cfg.mu, cfg.extent_mode);
                    if v >= cfg.value_floor {
                        plane.max_assign(inst.class_id, x, y, v);
                    }
                }
            }
        }
        HeatmapKind::Gaussian => {
            let sigma = cfg.gaussian_sigma_rule * inst.grid.w.min(inst.grid.h);
            let reach = cutoff_radius(T::two() * sigma * sigma, cfg.value_floor);
            let Some((x0, x1)) = cell_span(peak.x - reach, peak.x + reach, gw) else {
                return;
            };
            let Some((y0, y1)) = cell_span(peak.y - reach, peak.y + reach, gh) else {
                return;
            };
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let v = gaussian_value(cell_point(x, y), peak, sigma);
                    if v >= cfg.value_floor {
                        plane.max_assign(inst.class_id, x, y, v);
                    }
                }
            }
        }
    }
    plane.max_assign(inst.class_id, cx, cy, T::one());
}

fn draw_vertex<T: Real>(plane: &mut Plane<T>, inst: &Instance<T>, cfg: &EncoderConfig<T>) {
    let Some((vx, vy)) = inst.vertex_cell else {
        return;
    };
    let peak = cell_point::<T>(vx, vy);
    let long = inst.grid.h.max(inst.grid.w);
    let denom_len = long;
    let reach = cutoff_radius(extent(cfg.mu, denom_len, cfg.extent_mode), cfg.value_floor);
    let (gw, gh) = (plane.width, plane.height);
    let Some((x0, x1)) = cell_span(peak.x - reach, peak.x + reach, gw) else {
        return;
    };
    let Some((y0, y1)) = cell_span(peak.y - reach, peak.y + reach, gh) else {
        return;
    };
    for y in y0..=y1 {
        for x in x0..=x1 {
            let v = vertex_value_with(cell_point(x, y), peak, denom_len, cfg.mu, cfg.extent_mode);
            if v >= cfg.value_floor {
                plane.max_assign(inst.class_id, x, y, v);
            }
        }
    }
    plane.max_assign(inst.class_id, vx, vy, T::one());
}

/// Lists every cell whose heatmap value is exactly `1.0`, ordered by kind,
/// class, row and column.
pub fn heatmap_peak_truth<T: Real>(maps: &TargetMaps<T>) -> Vec<PeakTruth> {
    let mut out = Vec::new();
    for (kind, plane) in [
        (PeakKind::Center, &maps.center_hm),
        (PeakKind::Vertex, &maps.vertex_hm),
    ] {
        for class_id in 0..plane.channels {
            for y in 0..plane.height {
                for x in 0..plane.width {
                    if plane.get(class_id, x, y) == T::one() {
                        out.push(PeakTruth {
                            kind,
                            class_id,
                            cell: (x, y),
                        });
                    }
                }
            }
        }
    }
    out
}

/// True when some collision warning was emitted during encoding.
pub fn has_collisions<T>(maps: &TargetMaps<T>) -> bool {
    maps.warnings
        .iter()
        .any(|w| matches!(w, EncodeWarning::PeakCollision { .. }))
}
