//! NMS-free decoding.
//!
//! A box is decoded at every feature cell, KSWarp turns the center and corner
//! heatmaps into a confidence map aligned with those boxes, and detections are
//! the local maxima of that map. No IoU-based suppression happens anywhere.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geom::{bev_corners, bilinear_sample_channel, wrap_angle, Box3D, Grid2D};
use crate::maps::{PredictionMaps, RegressionMaps};
use crate::nn::maxpool2d_3x3_same;
use crate::voxelize::GridConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct InferConfig {
    pub threshold: f64,
    pub max_detections: usize,
    /// When off, confidences are the raw center-heatmap values.
    pub kswarp: bool,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            threshold: 0.1,
            max_detections: 50,
            kswarp: true,
        }
    }
}

impl InferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) || self.max_detections == 0 {
            return Err(Error::Config(format!(
                "threshold {} must lie in [0, 1] and max_detections >= 1",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: Box3D,
    pub class: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub row: usize,
    pub col: usize,
    pub class: usize,
    pub confidence: f64,
}

/// Decodes the box predicted at one feature cell. Returns `None` when a size
/// channel is not positive (or anything is non-finite).
pub fn decode_box_at(reg: &RegressionMaps, row: usize, col: usize, grid: &GridConfig) -> Option<Box3D> {
    let [ox, oy, z, l, w, h, cos, sin] = reg.vector_at(row, col);
    let (cx, cy) = grid.from_feature(row as f64 + ox, col as f64 + oy);
    let yaw = wrap_angle(sin.atan2(cos)).ok()?;
    Box3D::new(cx, cy, z, l, w, h, yaw).ok()
}

/// Decodes boxes at the given peaks. Peaks whose decoded size is not positive
/// are skipped; the second element counts them.
pub fn assemble_boxes(
    peaks: &[Peak],
    reg: &RegressionMaps,
    grid: &GridConfig,
) -> Result<(Vec<(Box3D, usize)>, usize)> {
    reg.validate()?;
    let mut out = Vec::with_capacity(peaks.len());
    let mut dropped = 0;
    for p in peaks {
        if p.row >= reg.rows() || p.col >= reg.cols() {
            return Err(Error::OutOfRange(format!("peak ({}, {}) outside the map", p.row, p.col)));
        }
        match decode_box_at(reg, p.row, p.col, grid) {
            Some(b) => out.push((b, p.class)),
            None => dropped += 1,
        }
    }
    Ok((out, dropped))
}

/// Heatmap sampling coordinates `(u, v) = (column, row)` of a LiDAR-frame
/// point. Cell `i` spans `[i, i + 1)` in feature units and its value sits at
/// the cell center, hence the half-cell shift.
pub fn sample_coords(grid: &GridConfig, x: f64, y: f64) -> (f64, f64) {
    let (fx, fy) = grid.to_feature(x, y);
    (fy - 0.5, fx - 0.5)
}

fn kswarp_one(
    center_heat: &Grid2D,
    corner_heat: Option<&Grid2D>,
    b: &Box3D,
    class: usize,
    grid: &GridConfig,
) -> f64 {
    let (u, v) = sample_coords(grid, b.cx, b.cy);
    let center = bilinear_sample_channel(center_heat, class, u, v);
    match corner_heat {
        Some(a) => {
            let mut acc = center;
            for p in bev_corners(b) {
                let (u, v) = sample_coords(grid, p[0], p[1]);
                acc += bilinear_sample_channel(a, class, u, v);
            }
            acc / 5.0
        }
        None => center,
    }
}

/// Keypoint-sensitive warping: the confidence of each box is the mean of its
/// center sampled from the center heatmap and its four footprint corners
/// sampled from the corner heatmap (both in the box's class channel). Without
/// a corner heatmap only the center sample is used.
pub fn kswarp(
    center_heat: &Grid2D,
    corner_heat: Option<&Grid2D>,
    boxes: &[(Box3D, usize)],
    grid: &GridConfig,
) -> Result<Vec<f64>> {
    if let Some(a) = corner_heat {
        center_heat.ensure_shape(a, "kswarp heatmaps")?;
    }
    boxes
        .iter()
        .map(|(b, class)| {
            if *class >= center_heat.channels {
                return Err(Error::OutOfRange(format!("class {class} has no heatmap channel")));
            }
            Ok(kswarp_one(center_heat, corner_heat, b, *class, grid))
        })
        .collect()
}

/// Keeps cells that are at least as large as all 8-connected neighbors and
/// above the threshold, then the top `max_detections` across classes ordered
/// by confidence, ties broken by (class, row, column).
pub fn peak_filter(conf: &Grid2D, cfg: &InferConfig) -> Vec<Peak> {
    let pooled = maxpool2d_3x3_same(conf);
    let mut peaks = Vec::new();
    for class in 0..conf.channels {
        for row in 0..conf.height {
            for col in 0..conf.width {
                let v = conf.get(row, col, class);
                if v > cfg.threshold && v >= pooled.get(row, col, class) {
                    peaks.push(Peak {
                        row,
                        col,
                        class,
                        confidence: v,
                    });
                }
            }
        }
    }
    peaks.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then((a.class, a.row, a.col).cmp(&(b.class, b.row, b.col)))
    });
    peaks.truncate(cfg.max_detections);
    peaks
}

/// Output of [`detect`]: detections plus the number of peaks whose decoded
/// box was invalid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectOutput {
    pub detections: Vec<Detection>,
    pub dropped: usize,
}

/// Full inference for one frame.
pub fn detect(pred: &PredictionMaps, grid: &GridConfig, cfg: &InferConfig) -> Result<DetectOutput> {
    pred.validate()?;
    cfg.validate()?;
    let (rows, cols) = (pred.reg.rows(), pred.reg.cols());
    let classes = pred.center_heat.channels;

    let mut decoded: Vec<Option<Box3D>> = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            decoded.push(decode_box_at(&pred.reg, row, col, grid));
        }
    }

    let conf = if cfg.kswarp {
        let mut conf = Grid2D::zeros(rows, cols, classes);
        for (cell, b) in decoded.iter().enumerate() {
            let Some(b) = b else { continue };
            for class in 0..classes {
                conf.data[cell * classes + class] =
                    kswarp_one(&pred.center_heat, pred.corner_heat.as_ref(), b, class, grid);
            }
        }
        conf
    } else {
        pred.center_heat.clone()
    };

    let mut out = DetectOutput::default();
    for p in peak_filter(&conf, cfg) {
        match decoded[p.row * cols + p.col] {
            Some(bbox) => out.detections.push(Detection {
                bbox,
                class: p.class,
                confidence: p.confidence.clamp(0.0, 1.0),
            }),
            None => out.dropped += 1,
        }
    }
    Ok(out)
}

/// One line per detection: `class cx cy cz l w h yaw confidence`.
pub fn format_detections(dets: &[Detection], class_names: &[String]) -> String {
    let mut s = String::new();
    for d in dets {
        let b = &d.bbox;
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {}",
            class_names[d.class], b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw, d.confidence
        );
    }
    s
}

pub fn parse_detections(text: &str, class_names: &[String]) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, conf) = line.rsplit_once(char::is_whitespace).ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: "expected 9 fields".into(),
        })?;
        let confidence: f64 = conf.trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("`{conf}` is not a confidence"),
        })?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("confidence {confidence} outside [0, 1]"),
            });
        }
        let (boxes, classes) =
            crate::pointcloud::parse_labels(label, class_names).map_err(|e| match e {
                Error::Parse { msg, .. } => Error::Parse { line: i + 1, msg },
                other => other,
            })?;
        out.push(Detection {
            bbox: boxes[0],
            class: classes[0],
            confidence,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;

    fn grid() -> GridConfig {
        GridConfig {
            x_range: (0.0, 25.6),
            y_range: (-12.8, 12.8),
            z_range: (-3.0, 1.0),
            vx: 0.2,
            vy: 0.2,
            vz: 0.2,
            downsample: 4,
            max_points_per_voxel: 5,
        }
    }

    #[test]
    fn assemble_linear_map_and_atan2() {
        let g = GridConfig {
            vx: 0.05,
            vy: 0.05,
            vz: 0.1,
            ..GridConfig::default()
        };
        let (rows, cols) = g.feature_shape();
        let mut reg = RegressionMaps::zeros(rows, cols);
        reg.add_vector_at(10, 3, &[0.3, 0.0, -1.0, 4.0, 1.8, 1.5, 0.0, 1.0]);
        reg.add_vector_at(11, 3, &[0.3, 0.0, -1.0, 0.0, 1.8, 1.5, 1.0, 0.0]);
        let peaks = [
            Peak { row: 10, col: 3, class: 0, confidence: 0.9 },
            Peak { row: 11, col: 3, class: 0, confidence: 0.8 },
        ];
        let (boxes, dropped) = assemble_boxes(&peaks, &reg, &g).unwrap();
        assert_eq!(dropped, 1);
        let b = boxes[0].0;
        assert!((b.cx - 2.06).abs() < 1e-12);
        assert!((b.yaw - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn kswarp_examples() {
        let g = grid();
        let (rows, cols) = g.feature_shape();
        let b = {
            let (x, y) = g.from_feature(10.5, 7.5);
            Box3D::new(x, y, -1.0, 4.0, 1.8, 1.5, 0.2).unwrap()
        };
        let ones = Grid2D::filled(rows, cols, 1, 1.0);
        let c = kswarp(&ones, Some(&ones), &[(b, 0)], &g).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15);

        let mut center = Grid2D::zeros(rows, cols, 1);
        center.set(10, 7, 0, 1.0);
        let zeros = Grid2D::zeros(rows, cols, 1);
        let c = kswarp(&center, Some(&zeros), &[(b, 0)], &g).unwrap();
        assert!((c[0] - 0.2).abs() < 1e-15);
        let c = kswarp(&center, None, &[(b, 0)], &g).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15);
        assert!(kswarp(&center, Some(&zeros), &[(b, 3)], &g).is_err());
    }

    #[test]
    fn peak_filter_examples() {
        let cfg = InferConfig::default();
        let mut conf = Grid2D::filled(5, 5, 1, 0.05);
        conf.set(2, 3, 0, 0.8);
        let peaks = peak_filter(&conf, &cfg);
        assert_eq!(peaks.len(), 1);
        assert_eq!((peaks[0].row, peaks[0].col), (2, 3));
        assert!(peak_filter(&Grid2D::filled(5, 5, 1, 0.05), &cfg).is_empty());
    }

    #[test]
    fn plateau_kept_then_ordered() {
        let cfg = InferConfig {
            max_detections: 3,
            ..InferConfig::default()
        };
        let mut conf = Grid2D::zeros(4, 4, 2);
        conf.set(1, 1, 0, 0.5);
        conf.set(1, 2, 0, 0.5);
        conf.set(3, 3, 1, 0.5);
        conf.set(0, 3, 1, 0.9);
        let peaks = peak_filter(&conf, &cfg);
        let keys: Vec<_> = peaks.iter().map(|p| (p.class, p.row, p.col)).collect();
        assert_eq!(keys, vec![(1, 0, 3), (0, 1, 1), (0, 1, 2)]);
    }

    #[test]
    fn empty_heatmaps_detect_nothing() {
        let g = grid();
        let (rows, cols) = g.feature_shape();
        let pred = PredictionMaps {
            center_heat: Grid2D::zeros(rows, cols, 2),
            corner_heat: Some(Grid2D::zeros(rows, cols, 2)),
            reg: RegressionMaps::zeros(rows, cols),
        };
        assert!(detect(&pred, &g, &InferConfig::default()).unwrap().detections.is_empty());
    }

    #[test]
    fn detection_text_roundtrip() {
        let names = vec!["Car".to_string()];
        let d = Detection {
            bbox: Box3D::new(1.25, -2.5, -1.0, 4.0, 1.8, 1.5, 0.1).unwrap(),
            class: 0,
            confidence: 0.75,
        };
        let text = format_detections(&[d], &names);
        assert_eq!(parse_detections(&text, &names).unwrap(), vec![d]);
        assert!(parse_detections("Car 1 2 3 4 5 6 0 1.5\n", &names).is_err());
        assert!(parse_detections("Car 1 2 3 4 5 6\n", &names).is_err());
    }
}
