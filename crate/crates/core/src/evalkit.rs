//! Detection metrics: greedy confidence-ordered matching, average precision
//! at evenly spaced recall positions, and the nuScenes detection score.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geom::{iou_3d, rotated_iou_bev, Box3D};
use crate::infer::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IouMode {
    Bev,
    ThreeD,
}

impl IouMode {
    pub fn iou(&self, a: &Box3D, b: &Box3D) -> f64 {
        match self {
            IouMode::Bev => rotated_iou_bev(a, b),
            IouMode::ThreeD => iou_3d(a, b),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            IouMode::Bev => "bev",
            IouMode::ThreeD => "3d",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Match threshold per class id.
    pub iou_thresholds: Vec<f64>,
    pub recall_positions: usize,
}

/// Default threshold for a class name: 0.5 for people and riders, 0.7 for
/// vehicles and anything else.
pub fn default_iou_threshold(class_name: &str) -> f64 {
    match class_name {
        "Pedestrian" | "Person_sitting" | "Cyclist" | "pedestrian" | "bicycle" | "motorcycle"
        | "traffic_cone" | "barrier" => 0.5,
        _ => 0.7,
    }
}

impl EvalConfig {
    pub fn for_classes(class_names: &[String]) -> Self {
        Self {
            iou_thresholds: class_names.iter().map(|c| default_iou_threshold(c)).collect(),
            recall_positions: 40,
        }
    }

    /// Same threshold for every class.
    pub fn uniform(num_classes: usize, threshold: f64) -> Self {
        Self {
            iou_thresholds: vec![threshold; num_classes],
            recall_positions: 40,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::Config("IoU thresholds must lie in (0, 1]".into()));
        }
        if self.recall_positions == 0 {
            return Err(Error::Config("recall_positions must be >= 1".into()));
        }
        Ok(())
    }
}

/// Scored detections flagged TP/FP, plus how many ground truths they were
/// matched against. Results from several frames concatenate with [`extend`].
///
/// [`extend`]: MatchResult::extend
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    /// `(confidence, is_true_positive)` per detection.
    pub scored: Vec<(f64, bool)>,
    pub num_gt: usize,
}

impl MatchResult {
    pub fn extend(&mut self, other: MatchResult) {
        self.scored.extend(other.scored);
        self.num_gt += other.num_gt;
    }

    pub fn true_positives(&self) -> usize {
        self.scored.iter().filter(|s| s.1).count()
    }
}

/// Greedy matching within one frame and class. Detections are visited in
/// descending confidence; each claims the still-unmatched ground truth of
/// highest IoU if that IoU reaches `threshold`.
pub fn match_detections(
    dets: &[Detection],
    gts: &[Box3D],
    threshold: f64,
    mode: IouMode,
) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    let mut taken = vec![false; gts.len()];
    let mut scored = Vec::with_capacity(dets.len());
    for i in order {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let iou = mode.iou(&d.bbox, g);
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        let tp = match best {
            Some((j, iou)) if iou >= threshold => {
                taken[j] = true;
                true
            }
            _ => false,
        };
        scored.push((d.confidence, tp));
    }
    MatchResult {
        scored,
        num_gt: gts.len(),
    }
}

/// Average of the interpolated precision at recall `k / positions` for
/// `k = 1..=positions`; interpolated precision at `r` is the best precision
/// reached at any recall `>= r` (0 if recall `r` is never reached).
pub fn ap_at_recall_positions(result: &MatchResult, positions: usize) -> Result<f64> {
    if result.num_gt == 0 {
        return Err(Error::NoGroundTruth);
    }
    let mut scored = result.scored.clone();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    // (tp count, precision) after each detection.
    let mut curve = Vec::with_capacity(scored.len());
    let mut tp = 0usize;
    for (k, &(_, is_tp)) in scored.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        curve.push((tp, tp as f64 / (k + 1) as f64));
    }
    // Running max of precision from the tail.
    let mut best_from = vec![0.0f64; curve.len() + 1];
    for i in (0..curve.len()).rev() {
        best_from[i] = best_from[i + 1].max(curve[i].1);
    }
    let mut sum = 0.0;
    let mut cursor = 0;
    for k in 1..=positions {
        // First point whose recall tp / num_gt reaches k / positions, compared
        // exactly in integers.
        while cursor < curve.len() && curve[cursor].0 * positions < k * result.num_gt {
            cursor += 1;
        }
        sum += best_from[cursor];
    }
    Ok(sum / positions as f64)
}

/// AP with 40 recall positions.
pub fn ap40(result: &MatchResult) -> Result<f64> {
    ap_at_recall_positions(result, 40)
}

/// nuScenes detection score from mAP and the five true-positive error means
/// `(mATE, mASE, mAOE, mAVE, mAAE)`.
pub fn nds(map: f64, mtp: [f64; 5]) -> f64 {
    let tp: f64 = mtp.iter().map(|e| 1.0 - e.min(1.0)).sum();
    (5.0 * map + tp) / 10.0
}

/// One evaluation frame: detections and labeled ground truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalFrame {
    pub detections: Vec<Detection>,
    pub boxes: Vec<Box3D>,
    pub classes: Vec<usize>,
}

/// Matches every frame for one class and pools the results.
pub fn evaluate_class(frames: &[EvalFrame], class: usize, threshold: f64, mode: IouMode) -> MatchResult {
    let mut pooled = MatchResult::default();
    for f in frames {
        let dets: Vec<Detection> = f.detections.iter().filter(|d| d.class == class).copied().collect();
        let gts: Vec<Box3D> = f
            .boxes
            .iter()
            .zip(&f.classes)
            .filter(|(_, &c)| c == class)
            .map(|(b, _)| *b)
            .collect();
        pooled.extend(match_detections(&dets, &gts, threshold, mode));
    }
    pooled
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAp {
    pub class: String,
    pub threshold: f64,
    pub num_gt: usize,
    pub num_det: usize,
    /// `None` when the class has no ground truth.
    pub ap_bev: Option<f64>,
    pub ap_3d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<ClassAp>,
    pub nds: Option<f64>,
}

impl EvalReport {
    /// Plain-text table, one row per class.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<14} {:>6} {:>6} {:>6} {:>10} {:>10}", "class", "iou", "gt", "det", "AP40_bev", "AP40_3d");
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{:.4}", x));
        for c in &self.classes {
            let _ = writeln!(
                s,
                "{:<14} {:>6.2} {:>6} {:>6} {:>10} {:>10}",
                c.class,
                c.threshold,
                c.num_gt,
                c.num_det,
                fmt(c.ap_bev),
                fmt(c.ap_3d)
            );
        }
        if let Some(n) = self.nds {
            let _ = writeln!(s, "NDS {:.4}", n);
        }
        s
    }
}

/// Per-class AP40 in both IoU modes.
pub fn evaluate(frames: &[EvalFrame], class_names: &[String], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if cfg.iou_thresholds.len() != class_names.len() {
        return Err(Error::Config(format!(
            "{} IoU thresholds for {} classes",
            cfg.iou_thresholds.len(),
            class_names.len()
        )));
    }
    let mut classes = Vec::new();
    for (class, name) in class_names.iter().enumerate() {
        let threshold = cfg.iou_thresholds[class];
        let bev = evaluate_class(frames, class, threshold, IouMode::Bev);
        let three = evaluate_class(frames, class, threshold, IouMode::ThreeD);
        let ap = |m: &MatchResult| match ap_at_recall_positions(m, cfg.recall_positions) {
            Ok(v) => Ok(Some(v)),
            Err(Error::NoGroundTruth) => Ok(None),
            Err(e) => Err(e),
        };
        classes.push(ClassAp {
            class: name.clone(),
            threshold,
            num_gt: bev.num_gt,
            num_det: bev.scored.len(),
            ap_bev: ap(&bev)?,
            ap_3d: ap(&three)?,
        });
    }
    Ok(EvalReport { classes, nds: None })
}

/// Reads an mTP sidecar of `key value` lines with keys `mAP` (optional),
/// `mATE`, `mASE`, `mAOE`, `mAVE` and `mAAE`.
pub fn parse_mtp_sidecar(text: &str) -> Result<(Option<f64>, [f64; 5])> {
    let keys = ["mATE", "mASE", "mAOE", "mAVE", "mAAE"];
    let mut vals: [Option<f64>; 5] = [None; 5];
    let mut map = None;
    for (line, key, value) in crate::kv::parse_kv(text)? {
        let v = crate::kv::parse_f64(&key, &value)?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Parse {
                line,
                msg: format!("{key} must be a non-negative number"),
            });
        }
        if key == "mAP" {
            map = Some(v);
        } else if let Some(k) = keys.iter().position(|k| *k == key) {
            vals[k] = Some(v);
        } else {
            return Err(Error::Parse {
                line,
                msg: format!("unknown key `{key}`"),
            });
        }
    }
    let mut out = [0.0; 5];
    for (k, v) in vals.iter().enumerate() {
        out[k] = v.ok_or_else(|| Error::Config(format!("sidecar lacks {}", keys[k])))?;
    }
    Ok((map, out))
}
