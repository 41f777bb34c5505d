//! Detection matching under rotated IoU and VOC-style average precision.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decoder::Detection;
use crate::error::{Error, Result};
use crate::geometry::rotated_iou;
use crate::scalar::Real;
use crate::target_codec::Annotation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApMethod {
    /// 11-point interpolation at recall 0, 0.1, ..., 1.
    Voc07,
    /// Area under the monotone precision envelope.
    #[default]
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub ap_method: ApMethod,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            ap_method: ApMethod::Continuous,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Config("iou_threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchLabel {
    TruePositive,
    FalsePositive,
    /// Matched a difficult ground truth; counts as neither TP nor FP.
    Ignored,
}

/// Labels detections of one image, taken in the given order.
///
/// Each detection goes to the unmatched same-class ground truth with the
/// highest IoU, provided that IoU reaches the threshold. Difficult ground
/// truths absorb any number of detections, which are then ignored.
pub fn match_detections<T: Real>(dets: &[Detection<T>], gts: &[Annotation<T>], cfg: &EvalConfig) -> Vec<MatchLabel> {
    let mut taken = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                if taken[j] || g.class_id() != d.class_id {
                    continue;
                }
                let iou = rotated_iou(&d.quad, &g.quad).map(|r| r.iou.to_f64_lossy()).unwrap_or(0.0);
                if iou >= cfg.iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            match best {
                Some((j, _)) if gts[j].difficult => MatchLabel::Ignored,
                Some((j, _)) => {
                    taken[j] = true;
                    MatchLabel::TruePositive
                }
                None => MatchLabel::FalsePositive,
            }
        })
        .collect()
}

/// Precision and recall after each scored detection.
pub fn precision_recall(labels: &[MatchLabel], num_gt: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    for l in labels {
        match l {
            MatchLabel::TruePositive => tp += 1,
            MatchLabel::FalsePositive => fp += 1,
            MatchLabel::Ignored => continue,
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 });
    }
    (precision, recall)
}

/// AP of labels sorted by descending score. `None` when `num_gt` is zero.
pub fn average_precision(labels: &[MatchLabel], num_gt: usize, method: ApMethod) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let (prec, rec) = precision_recall(labels, num_gt);
    let ap = match method {
        ApMethod::Voc07 => {
            let mut sum = 0.0;
            for t in 0..=10 {
                let r = t as f64 / 10.0;
                let p = prec
                    .iter()
                    .zip(&rec)
                    .filter(|(_, &rc)| rc >= r)
                    .map(|(&p, _)| p)
                    .fold(0.0, f64::max);
                sum += p;
            }
            sum / 11.0
        }
        ApMethod::Continuous => {
            let mut mrec = Vec::with_capacity(rec.len() + 2);
            let mut mpre = Vec::with_capacity(prec.len() + 2);
            mrec.push(0.0);
            mpre.push(0.0);
            mrec.extend_from_slice(&rec);
            mpre.extend_from_slice(&prec);
            mrec.push(1.0);
            mpre.push(0.0);
            for i in (0..mpre.len() - 1).rev() {
                mpre[i] = mpre[i].max(mpre[i + 1]);
            }
            let mut sum = 0.0;
            for i in 1..mrec.len() {
                if mrec[i] != mrec[i - 1] {
                    sum += (mrec[i] - mrec[i - 1]) * mpre[i];
                }
            }
            sum
        }
    };
    Some(ap.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: usize,
    pub ap: Option<f64>,
    pub num_gt: usize,
    pub num_detections: usize,
    pub tp: usize,
    pub fp: usize,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub per_class: Vec<ClassReport>,
    /// Mean AP over classes with at least one scored ground truth.
    pub map: Option<f64>,
}

impl EvalReport {
    /// Aligned plain-text table, one row per class.
    pub fn to_table(&self, class_names: &[String]) -> String {
        let name = |c: usize| class_names.get(c).cloned().unwrap_or_else(|| format!("class{c}"));
        let width = self
            .per_class
            .iter()
            .map(|c| name(c.class_id).len())
            .chain(["class".len(), "mAP".len()])
            .max()
            .unwrap_or(5);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$} {:>7} {:>7} {:>7} {:>7} {:>8}", "class", "gt", "dets", "tp", "fp", "AP");
        for c in &self.per_class {
            let ap = c.ap.map(|v| format!("{:.4}", v)).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:<width$} {:>7} {:>7} {:>7} {:>7} {:>8}",
                name(c.class_id),
                c.num_gt,
                c.num_detections,
                c.tp,
                c.fp,
                ap
            );
        }
        let map = self.map.map(|v| format!("{:.4}", v)).unwrap_or_else(|| "-".into());
        let _ = writeln!(s, "{:<width$} {:>7} {:>7} {:>7} {:>7} {:>8}", "mAP", "", "", "", "", map);
        s
    }
}

/// Pooled ordering of detections: score descending, then class, image id,
/// center x and center y.
fn pooled_order<T: Real>(a: &(&str, &Detection<T>), b: &(&str, &Detection<T>)) -> Ordering {
    let (ca, cb) = (a.1.quad.center(), b.1.quad.center());
    b.1.score
        .to_f64_lossy()
        .total_cmp(&a.1.score.to_f64_lossy())
        .then(a.1.class_id.cmp(&b.1.class_id))
        .then(a.0.cmp(b.0))
        .then(ca.x.to_f64_lossy().total_cmp(&cb.x.to_f64_lossy()))
        .then(ca.y.to_f64_lossy().total_cmp(&cb.y.to_f64_lossy()))
        .then_with(|| {
            a.1.quad
                .coords()
                .iter()
                .zip(b.1.quad.coords().iter())
                .map(|(x, y)| x.to_f64_lossy().total_cmp(&y.to_f64_lossy()))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Per-class AP and mAP over a set of images.
///
/// Every image id in `dets_by_image` must appear in `gts_by_image`. Images
/// without detections may be omitted from `dets_by_image`.
pub fn evaluate<T: Real>(
    dets_by_image: &[(String, Vec<Detection<T>>)],
    gts_by_image: &[(String, Vec<Annotation<T>>)],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let mut gts: BTreeMap<&str, &[Annotation<T>]> = BTreeMap::new();
    for (id, g) in gts_by_image {
        if gts.insert(id.as_str(), g.as_slice()).is_some() {
            return Err(Error::Config(format!("duplicate ground-truth image id {id:?}")));
        }
    }
    let mut dets: BTreeMap<&str, Vec<&Detection<T>>> = BTreeMap::new();
    for (id, d) in dets_by_image {
        if !gts.contains_key(id.as_str()) {
            return Err(Error::Config(format!("detections for unknown image id {id:?}")));
        }
        dets.entry(id.as_str()).or_default().extend(d.iter());
    }

    let mut classes: Vec<usize> = gts
        .values()
        .flat_map(|g| g.iter().map(|a| a.class_id()))
        .chain(dets.values().flat_map(|d| d.iter().map(|x| x.class_id)))
        .collect();
    classes.sort_unstable();
    classes.dedup();

    let mut per_class = Vec::with_capacity(classes.len());
    for &class in &classes {
        let mut pooled: Vec<(&str, &Detection<T>)> = dets
            .iter()
            .flat_map(|(id, ds)| ds.iter().filter(|d| d.class_id == class).map(move |d| (*id, *d)))
            .collect();
        pooled.sort_by(pooled_order);

        let mut labels = vec![MatchLabel::FalsePositive; pooled.len()];
        let mut by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (k, (id, _)) in pooled.iter().enumerate() {
            by_image.entry(id).or_default().push(k);
        }
        for (id, idx) in &by_image {
            let ds: Vec<Detection<T>> = idx.iter().map(|&k| *pooled[k].1).collect();
            let class_gts: Vec<Annotation<T>> = gts[id].iter().filter(|a| a.class_id() == class).copied().collect();
            for (&k, l) in idx.iter().zip(match_detections(&ds, &class_gts, cfg)) {
                labels[k] = l;
            }
        }
        let num_gt = gts
            .values()
            .flat_map(|g| g.iter())
            .filter(|a| a.class_id() == class && !a.difficult)
            .count();
        let (precision, recall) = precision_recall(&labels, num_gt);
        per_class.push(ClassReport {
            class_id: class,
            ap: average_precision(&labels, num_gt, cfg.ap_method),
            num_gt,
            num_detections: pooled.len(),
            tp: labels.iter().filter(|l| **l == MatchLabel::TruePositive).count(),
            fp: labels.iter().filter(|l| **l == MatchLabel::FalsePositive).count(),
            precision,
            recall,
        });
    }
    let scored: Vec<f64> = per_class.iter().filter_map(|c| c.ap).collect();
    let map = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
    Ok(EvalReport {
        config: *cfg,
        per_class,
        map,
    })
}
