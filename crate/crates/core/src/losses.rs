//! Training losses with analytic gradients.
//!
//! Heatmaps use the penalty-reduced focal loss; size, offset and direction
//! regressions use smooth L1 averaged over supervised peaks. The total loss
//! is a weighted sum of the five terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::target_codec::TargetMaps;

/// `0.5·x²` for `|x| < 1`, `|x| − 0.5` otherwise.
#[inline]
pub fn smooth_l1<T: Real>(x: T) -> T {
    let a = x.abs();
    if a < T::one() {
        T::half() * x * x
    } else {
        a - T::half()
    }
}

#[inline]
pub fn smooth_l1_grad<T: Real>(x: T) -> T {
    if x.abs() < T::one() {
        x
    } else {
        x.signum()
    }
}

/// Normalizer for the focal loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Cells with truth > 0.
    #[default]
    CoveredCells,
    /// Cells with truth == 1 (one per object).
    Peaks,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams<T> {
    pub alpha: T,
    pub beta: T,
    /// Predictions are clamped to `[eps, 1 − eps]` before the logs.
    pub eps: T,
    pub normalization: Normalization,
}

impl<T: Real> Default for FocalParams<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(2.0),
            beta: T::lit(4.0),
            eps: T::lit(1e-12),
            normalization: Normalization::CoveredCells,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocalLoss<T> {
    pub value: T,
    /// d value / d pred, same layout as the inputs.
    pub grad: Vec<T>,
    pub n_pos: usize,
    /// Set when no positive cells exist and the sum was left unnormalized.
    pub unnormalized: bool,
}

pub fn count_positives<T: Real>(truth: &[T], normalization: Normalization) -> usize {
    match normalization {
        Normalization::CoveredCells => truth.iter().filter(|&&t| t > T::zero()).count(),
        Normalization::Peaks => truth.iter().filter(|&&t| t == T::one()).count(),
    }
}

/// Penalty-reduced pixel-wise focal loss over a heatmap and its gradient.
///
/// Cells with truth exactly `1` contribute `(1−ρ)^α·log ρ`; all other cells
/// contribute `(1−ρ')^β·ρ^α·log(1−ρ)`. The negated sum is divided by the
/// positive count selected by `params.normalization`.
pub fn heatmap_focal_loss<T: Real>(pred: &[T], truth: &[T], params: &FocalParams<T>) -> Result<FocalLoss<T>> {
    if pred.len() != truth.len() {
        return Err(Error::Config(format!(
            "prediction has {} cells, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    let n_pos = count_positives(truth, params.normalization);
    let unnormalized = n_pos == 0;
    let norm = T::from_usize(n_pos.max(1)).unwrap();
    let (lo, hi) = (params.eps, T::one() - params.eps);
    let (alpha, beta) = (params.alpha, params.beta);
    let mut sum = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&raw, &gt) in pred.iter().zip(truth) {
        let rho = raw.max(lo).min(hi);
        let clamped = raw < lo || raw > hi;
        let (term, dterm) = if gt == T::one() {
            let one_m = T::one() - rho;
            let f = one_m.powf(alpha) * rho.ln();
            let df = -alpha * one_m.powf(alpha - T::one()) * rho.ln() + one_m.powf(alpha) / rho;
            (f, df)
        } else {
            let weight = (T::one() - gt).powf(beta);
            let one_m = T::one() - rho;
            let f = weight * rho.powf(alpha) * one_m.ln();
            let df = weight
                * (alpha * rho.powf(alpha - T::one()) * one_m.ln() - rho.powf(alpha) / one_m);
            (f, df)
        };
        sum = sum + term;
        grad.push(if clamped { T::zero() } else { -dterm / norm });
    }
    Ok(FocalLoss {
        value: -sum / norm,
        grad,
        n_pos,
        unnormalized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DirectionResidual {
    /// Plain difference in degrees.
    #[default]
    Raw,
    /// Difference wrapped into `[−180, 180)`.
    Wrapped,
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Config(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Mean smooth L1 of direction residuals over supervised peaks.
pub fn direction_loss<T: Real>(pred: &[T], truth: &[T], mode: DirectionResidual) -> Result<T> {
    check_len(pred.len(), truth.len())?;
    if pred.is_empty() {
        return Ok(T::zero());
    }
    let full = T::lit(360.0);
    let half = T::lit(180.0);
    let sum = pred.iter().zip(truth).fold(T::zero(), |acc, (&p, &t)| {
        let r = match mode {
            DirectionResidual::Raw => t - p,
            DirectionResidual::Wrapped => {
                let d = (t - p + half) % full;
                (if d < T::zero() { d + full } else { d }) - half
            }
        };
        acc + smooth_l1(r)
    });
    Ok(sum / T::from_usize(pred.len()).unwrap())
}

fn vector_loss<T: Real, const N: usize>(pred: &[[T; N]], truth: &[[T; N]]) -> Result<T> {
    check_len(pred.len(), truth.len())?;
    if pred.is_empty() {
        return Ok(T::zero());
    }
    let sum = pred.iter().zip(truth).fold(T::zero(), |acc, (p, t)| {
        acc + p
            .iter()
            .zip(t)
            .fold(T::zero(), |a, (&pv, &tv)| a + smooth_l1(tv - pv))
    });
    Ok(sum / T::from_usize(pred.len()).unwrap())
}

/// Smooth L1 summed over `(cx, cy, tx, ty)`, averaged over peaks.
pub fn offset_loss<T: Real>(pred: &[[T; 4]], truth: &[[T; 4]]) -> Result<T> {
    vector_loss(pred, truth)
}

/// Smooth L1 summed over `(w, h)`, averaged over peaks.
pub fn size_loss<T: Real>(pred: &[[T; 2]], truth: &[[T; 2]]) -> Result<T> {
    vector_loss(pred, truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights<T> {
    pub vertex_heatmap: T,
    pub center_heatmap: T,
    pub size: T,
    pub offset: T,
    pub direction: T,
}

impl<T: Real> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            vertex_heatmap: T::one(),
            center_heatmap: T::one(),
            size: T::one(),
            offset: T::lit(0.1),
            direction: T::one(),
        }
    }
}

impl<T: Real> LossWeights<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.vertex_heatmap,
            self.center_heatmap,
            self.size,
            self.offset,
            self.direction,
        ];
        if all.iter().any(|w| !(*w >= T::zero())) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents<T> {
    pub vertex_heatmap: T,
    pub center_heatmap: T,
    pub size: T,
    pub offset: T,
    pub direction: T,
}

pub fn total_loss<T: Real>(c: &LossComponents<T>, w: &LossWeights<T>) -> T {
    w.vertex_heatmap * c.vertex_heatmap
        + w.center_heatmap * c.center_heatmap
        + w.size * c.size
        + w.offset * c.offset
        + w.direction * c.direction
}

/// Evaluates all five loss terms of a predicted map set against targets.
///
/// Regression terms are read at the target's `pos_mask` cells only.
pub fn scene_losses<T: Real>(
    pred: &TargetMaps<T>,
    truth: &TargetMaps<T>,
    focal: &FocalParams<T>,
    direction_mode: DirectionResidual,
) -> Result<LossComponents<T>> {
    pred.check_shapes()?;
    truth.check_shapes()?;
    if !pred.center_hm.same_shape(&truth.center_hm) {
        return Err(Error::Config("prediction and truth grids differ".into()));
    }
    let vertex = heatmap_focal_loss(&pred.vertex_hm.data, &truth.vertex_hm.data, focal)?;
    let center = heatmap_focal_loss(&pred.center_hm.data, &truth.center_hm.data, focal)?;

    let (mut ps, mut ts) = (Vec::new(), Vec::new());
    let (mut po, mut to) = (Vec::new(), Vec::new());
    let (mut pd, mut td) = (Vec::new(), Vec::new());
    for y in 0..truth.grid_height() {
        for x in 0..truth.grid_width() {
            if truth.pos_mask.get(0, x, y) != T::one() {
                continue;
            }
            let pair = |m: &TargetMaps<T>| [m.size_map.get(0, x, y), m.size_map.get(1, x, y)];
            let quad = |m: &TargetMaps<T>| {
                [0, 1, 2, 3].map(|c| m.offset_map.get(c, x, y))
            };
            ps.push(pair(pred));
            ts.push(pair(truth));
            po.push(quad(pred));
            to.push(quad(truth));
            pd.push(pred.direction_map.get(0, x, y));
            td.push(truth.direction_map.get(0, x, y));
        }
    }
    Ok(LossComponents {
        vertex_heatmap: vertex.value,
        center_heatmap: center.value,
        size: size_loss(&ps, &ts)?,
        offset: offset_loss(&po, &to)?,
        direction: direction_loss(&pd, &td, direction_mode)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn smooth_l1_values() {
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(2.0), 1.5);
        assert_eq!(smooth_l1(-3.0), 2.5);
        assert_eq!(smooth_l1(0.0), 0.0);
        assert_eq!(smooth_l1_grad(-3.0), -1.0);
        assert_eq!(smooth_l1_grad(0.25), 0.25);
    }

    #[test]
    fn smooth_l1_gradient_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let step = 1e-4;
        let mut checked = 0;
        while checked < 100 {
            let x: f64 = rng.gen_range(-5.0..5.0);
            if (x.abs() - 1.0).abs() <= 1e-3 {
                continue;
            }
            let fd = (smooth_l1(x + step) - smooth_l1(x - step)) / (2.0 * step);
            assert!(rel_err(smooth_l1_grad(x), fd) <= 1e-5, "x = {x}");
            checked += 1;
        }
    }

    #[test]
    fn focal_single_cell_examples() {
        let p = FocalParams::default();
        let r = heatmap_focal_loss(&[1.0f64], &[1.0], &p).unwrap();
        assert!(r.value.abs() < 1e-20);
        let r = heatmap_focal_loss(&[0.5], &[1.0], &p).unwrap();
        let expected = -(0.5f64.powi(2)) * 0.5f64.ln();
        assert!((r.value - expected).abs() < 1e-15);
        assert!((r.value - 0.173287).abs() < 1e-6);
        assert_eq!(r.n_pos, 1);
    }

    #[test]
    fn focal_without_positives_is_flagged() {
        let r = heatmap_focal_loss(&[0.3, 0.1], &[0.0, 0.0], &FocalParams::default()).unwrap();
        assert!(r.unnormalized);
        let expected = -(0.09 * 0.7f64.ln() + 0.01 * 0.9f64.ln());
        assert!((r.value - expected).abs() < 1e-15);
    }

    #[test]
    fn focal_normalization_modes() {
        let truth = [1.0, 0.5, 0.2, 0.0];
        assert_eq!(count_positives(&truth, Normalization::CoveredCells), 3);
        assert_eq!(count_positives(&truth, Normalization::Peaks), 1);
    }

    #[test]
    fn focal_shape_mismatch() {
        assert!(heatmap_focal_loss(&[0.1, 0.2], &[1.0], &FocalParams::default()).is_err());
    }

    #[test]
    fn focal_gradient_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = FocalParams::default();
        let truth: Vec<f64> = (0..25)
            .map(|i| if i % 7 == 0 { 1.0 } else { rng.gen_range(0.0..0.95) })
            .collect();
        let pred: Vec<f64> = (0..25).map(|_| rng.gen_range(0.05..0.95)).collect();
        let base = heatmap_focal_loss(&pred, &truth, &params).unwrap();
        let step = 1e-4;
        for i in 0..pred.len() {
            let mut up = pred.clone();
            let mut down = pred.clone();
            up[i] += step;
            down[i] -= step;
            let fd = (heatmap_focal_loss(&up, &truth, &params).unwrap().value
                - heatmap_focal_loss(&down, &truth, &params).unwrap().value)
                / (2.0 * step);
            assert!(rel_err(base.grad[i], fd) <= 1e-5, "cell {i}: {} vs {fd}", base.grad[i]);
        }
    }

    #[test]
    fn focal_decreases_along_path_to_binary_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = FocalParams::default();
        let truth: Vec<f64> = (0..25).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
        let start: Vec<f64> = (0..25).map(|_| rng.gen_range(0.05..0.95)).collect();
        let mut last = f64::INFINITY;
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            let pred: Vec<f64> = start.iter().zip(&truth).map(|(p, t)| p + s * (t - p)).collect();
            let v = heatmap_focal_loss(&pred, &truth, &params).unwrap().value;
            assert!(v <= last, "step {k}: {v} > {last}");
            assert!(v >= 0.0);
            last = v;
        }
        assert!(last < 1e-9);
    }

    #[test]
    fn direction_loss_examples() {
        assert_eq!(direction_loss(&[10.0, 20.0], &[10.0, 20.0], DirectionResidual::Raw).unwrap(), 0.0);
        assert_eq!(direction_loss(&[92.0], &[90.0], DirectionResidual::Raw).unwrap(), 1.5);
        let two = direction_loss(&[0.5, 2.0], &[0.0, 0.0], DirectionResidual::Raw).unwrap();
        assert_eq!(two, 0.8125);
        assert_eq!(direction_loss::<f64>(&[], &[], DirectionResidual::Raw).unwrap(), 0.0);
        assert!(direction_loss(&[1.0], &[], DirectionResidual::Raw).is_err());
    }

    #[test]
    fn wrapped_direction_residual() {
        let raw = direction_loss(&[359.5], &[0.5], DirectionResidual::Raw).unwrap();
        let wrapped = direction_loss(&[359.5], &[0.5], DirectionResidual::Wrapped).unwrap();
        assert_eq!(raw, 358.5);
        assert_eq!(wrapped, 0.5);
    }

    #[test]
    fn offset_and_size_examples() {
        assert_eq!(offset_loss(&[[0.1, 0.2, 0.3, 0.4]], &[[0.1, 0.2, 0.3, 0.4]]).unwrap(), 0.0);
        assert_eq!(offset_loss(&[[0.25, 0.0, 0.0, 0.0]], &[[0.0; 4]]).unwrap(), 0.03125);
        assert_eq!(size_loss(&[[3.0, 4.0]], &[[3.0, 4.0]]).unwrap(), 0.0);
        assert_eq!(size_loss(&[[4.0, 5.0]], &[[3.0, 4.0]]).unwrap(), 1.0);
        assert_eq!(size_loss::<f64>(&[], &[]).unwrap(), 0.0);
    }

    #[test]
    fn regression_losses_match_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pred: Vec<[f64; 4]> = (0..17).map(|_| [0; 4].map(|_| rng.gen_range(-3.0..3.0))).collect();
        let truth: Vec<[f64; 4]> = (0..17).map(|_| [0; 4].map(|_| rng.gen_range(-3.0..3.0))).collect();
        let mut acc = 0.0;
        for (p, t) in pred.iter().zip(&truth) {
            for k in 0..4 {
                let r: f64 = p[k] - t[k];
                acc += if r.abs() < 1.0 { 0.5 * r * r } else { r.abs() - 0.5 };
            }
        }
        let expected = acc / 17.0;
        assert!((offset_loss(&pred, &truth).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn total_loss_weighting() {
        let w = LossWeights::<f64>::default();
        assert_eq!(total_loss(&LossComponents::default(), &w), 0.0);
        let ones = LossComponents {
            vertex_heatmap: 1.0,
            center_heatmap: 1.0,
            size: 1.0,
            offset: 1.0,
            direction: 1.0,
        };
        assert!((total_loss(&ones, &w) - 4.1).abs() < 1e-15);
        let doubled = LossComponents { size: 2.0, ..ones };
        assert!((total_loss(&doubled, &w) - total_loss(&ones, &w) - w.size).abs() < 1e-12);
        assert!(LossWeights { offset: -1.0, ..w }.validate().is_err());
    }
}
