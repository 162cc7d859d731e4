//! Optional ingestion of KITTI camera-frame object labels.
//!
//! KITTI annotates boxes in the rectified camera frame: location is the
//! bottom-face center, dimensions are `h w l`, and `ry` rotates about the
//! camera y axis (pointing down). Converting to the LiDAR frame needs the
//! `R0_rect` and `Tr_velo_to_cam` entries of the frame's calib file.

use std::f64::consts::FRAC_PI_2;

use super::class_index;
use crate::error::{Error, Result};
use crate::geom::Box3D;

#[derive(Debug, Clone, PartialEq)]
pub struct KittiCalib {
    pub r0_rect: [[f64; 3]; 3],
    /// Rows of the 3x4 rigid transform from velodyne to camera coordinates.
    pub tr_velo_to_cam: [[f64; 4]; 3],
}

impl KittiCalib {
    pub fn parse(text: &str) -> Result<Self> {
        let mut r0 = None;
        let mut tr = None;
        for (i, line) in text.lines().enumerate() {
            let Some((key, rest)) = line.split_once(':') else {
                continue;
            };
            let values: Result<Vec<f64>> = rest
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 1,
                        msg: format!("`{v}` is not a number"),
                    })
                })
                .collect();
            match key.trim() {
                "R0_rect" | "R_rect" => r0 = Some((i + 1, values?)),
                "Tr_velo_to_cam" | "Tr_velo_cam" => tr = Some((i + 1, values?)),
                _ => {}
            }
        }
        let (r0_line, r0) = r0.ok_or_else(|| Error::Config("calib lacks R0_rect".into()))?;
        let (tr_line, tr) = tr.ok_or_else(|| Error::Config("calib lacks Tr_velo_to_cam".into()))?;
        if r0.len() != 9 {
            return Err(Error::Parse {
                line: r0_line,
                msg: format!("R0_rect needs 9 values, got {}", r0.len()),
            });
        }
        if tr.len() != 12 {
            return Err(Error::Parse {
                line: tr_line,
                msg: format!("Tr_velo_to_cam needs 12 values, got {}", tr.len()),
            });
        }
        let mut calib = KittiCalib {
            r0_rect: [[0.0; 3]; 3],
            tr_velo_to_cam: [[0.0; 4]; 3],
        };
        for r in 0..3 {
            calib.r0_rect[r].copy_from_slice(&r0[3 * r..3 * r + 3]);
            calib.tr_velo_to_cam[r].copy_from_slice(&tr[4 * r..4 * r + 4]);
        }
        Ok(calib)
    }

    /// Maps a point from the rectified camera frame to the LiDAR frame.
    pub fn rect_to_lidar(&self, p: [f64; 3]) -> [f64; 3] {
        // Both transforms are rotations (plus translation), so inverses are
        // transposes.
        let mut cam = [0.0; 3];
        for (k, c) in cam.iter_mut().enumerate() {
            *c = (0..3).map(|r| self.r0_rect[r][k] * p[r]).sum();
        }
        let t = &self.tr_velo_to_cam;
        let shifted = [cam[0] - t[0][3], cam[1] - t[1][3], cam[2] - t[2][3]];
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = (0..3).map(|r| t[r][k] * shifted[r]).sum();
        }
        out
    }
}

/// Converts KITTI camera-frame labels to LiDAR-frame boxes. Objects whose
/// type is not in `class_names` (including `DontCare`) are skipped.
pub fn parse_kitti_camera_labels(
    text: &str,
    calib: &KittiCalib,
    class_names: &[String],
) -> Result<(Vec<Box3D>, Vec<usize>)> {
    let mut boxes = Vec::new();
    let mut classes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 15 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("KITTI label needs 15 fields, got {}", fields.len()),
            });
        }
        let Some(class) = class_index(class_names, fields[0]) else {
            continue;
        };
        let num = |k: usize| {
            fields[k].parse::<f64>().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("`{}` is not a number", fields[k]),
            })
        };
        let (h, w, l) = (num(8)?, num(9)?, num(10)?);
        let bottom = calib.rect_to_lidar([num(11)?, num(12)?, num(13)?]);
        let ry = num(14)?;
        let b = Box3D::new(bottom[0], bottom[1], bottom[2] + 0.5 * h, l, w, h, -ry - FRAC_PI_2)
            .map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        boxes.push(b);
        classes.push(class);
    }
    Ok((boxes, classes))
}
