//! Point clouds, labeled scenes and their file formats.
//!
//! Velodyne scans use the KITTI `.bin` layout: little-endian `f32` quadruples
//! `(x, y, z, intensity)` with no header. Labels use a native LiDAR-frame text
//! format, one box per line: `class cx cy cz l w h yaw`.

mod augment;
mod kitti;
mod synth;

pub use augment::{augment_global, GlobalAug};
pub use kitti::{parse_kitti_camera_labels, KittiCalib};
pub use synth::{synth_scene, ClassSizes, SceneSpec};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geom::Box3D;

/// Bytes per point record in a KITTI velodyne scan.
pub const RECORD_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    pub fn xyz(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A point cloud with its ground-truth boxes; `classes[i]` labels `boxes[i]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledScene {
    pub cloud: PointCloud,
    pub boxes: Vec<Box3D>,
    pub classes: Vec<usize>,
}

impl LabeledScene {
    pub fn validate(&self) -> Result<()> {
        if self.boxes.len() != self.classes.len() {
            return Err(Error::Shape(format!(
                "{} boxes but {} class ids",
                self.boxes.len(),
                self.classes.len()
            )));
        }
        for b in &self.boxes {
            Box3D::new(b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw)?;
            if b.yaw <= -std::f64::consts::PI || b.yaw > std::f64::consts::PI {
                return Err(Error::InvalidBox(format!("yaw {} not wrapped", b.yaw)));
            }
        }
        if self
            .cloud
            .points
            .iter()
            .any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::NonFinite("point coordinate"));
        }
        Ok(())
    }
}

pub fn read_kitti_bin(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::TruncatedRecord {
            offset: bytes.len() / RECORD_BYTES * RECORD_BYTES,
        });
    }
    let points = bytes
        .chunks_exact(RECORD_BYTES)
        .map(|rec| {
            let f = |i: usize| {
                f32::from_le_bytes([rec[4 * i], rec[4 * i + 1], rec[4 * i + 2], rec[4 * i + 3]])
                    as f64
            };
            Point {
                x: f(0),
                y: f(1),
                z: f(2),
                intensity: f(3),
            }
        })
        .collect();
    Ok(PointCloud { points })
}

pub fn write_kitti_bin(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * RECORD_BYTES);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Parses native LiDAR-frame labels. Class names are resolved against
/// `class_names`; yaw is wrapped into `(-pi, pi]`.
pub fn parse_labels(text: &str, class_names: &[String]) -> Result<(Vec<Box3D>, Vec<usize>)> {
    let mut boxes = Vec::new();
    let mut classes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 8 fields `class cx cy cz l w h yaw`, got {}", fields.len()),
            });
        }
        let class = class_index(class_names, fields[0]).ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("unknown class `{}`", fields[0]),
        })?;
        let mut v = [0.0; 7];
        for (k, f) in fields[1..].iter().enumerate() {
            v[k] = f.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("`{f}` is not a number"),
            })?;
        }
        let b = Box3D::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6]).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        boxes.push(b);
        classes.push(class);
    }
    Ok((boxes, classes))
}

pub fn format_labels(boxes: &[Box3D], classes: &[usize], class_names: &[String]) -> String {
    let mut s = String::new();
    for (b, &c) in boxes.iter().zip(classes) {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {}",
            class_names[c], b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw
        );
    }
    s
}

pub(crate) fn class_index(class_names: &[String], name: &str) -> Option<usize> {
    class_names.iter().position(|c| c == name)
}
