//! Oriented box geometry, rotated IoU and the bilinear sampling kernel.
//!
//! Boxes live in the LiDAR frame: x forward, y left, z up, meters. Yaw is the
//! heading about +z measured from +x, kept in `(-pi, pi]`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Intersection areas below this are treated as empty.
pub const AREA_EPS: f64 = 1e-12;

pub type Point2 = [f64; 2];
pub type Point3 = [f64; 3];

/// Oriented 3D box: center, size (length along heading, width, height), yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
}

impl Box3D {
    /// Validates sizes and wraps the yaw.
    pub fn new(cx: f64, cy: f64, cz: f64, l: f64, w: f64, h: f64, yaw: f64) -> Result<Self> {
        for (name, v) in [("cx", cx), ("cy", cy), ("cz", cz), ("l", l), ("w", w), ("h", h)] {
            if !v.is_finite() {
                return Err(Error::InvalidBox(format!("{name} is not finite")));
            }
        }
        if !(l > 0.0 && w > 0.0 && h > 0.0) {
            return Err(Error::InvalidBox(format!(
                "sizes must be positive, got l={l} w={w} h={h}"
            )));
        }
        let yaw = wrap_angle(yaw)?;
        Ok(Self {
            cx,
            cy,
            cz,
            l,
            w,
            h,
            yaw,
        })
    }

    pub fn volume(&self) -> f64 {
        self.l * self.w * self.h
    }

    pub fn bev_area(&self) -> f64 {
        self.l * self.w
    }

    pub fn z_min(&self) -> f64 {
        self.cz - 0.5 * self.h
    }

    pub fn z_max(&self) -> f64 {
        self.cz + 0.5 * self.h
    }

    /// Whether a point lies inside the box (boundary inclusive).
    pub fn contains(&self, p: Point3) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.cx;
        let dy = p[1] - self.cy;
        let along = c * dx + s * dy;
        let across = -s * dx + c * dy;
        along.abs() <= 0.5 * self.l
            && across.abs() <= 0.5 * self.w
            && (p[2] - self.cz).abs() <= 0.5 * self.h
    }
}

/// Dense 2D map stored row-major as (row, column, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Grid2D {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} grid needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        let i = self.index(row, col, ch);
        self.data[i] = value;
    }

    pub fn same_shape(&self, other: &Grid2D) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn ensure_shape(&self, other: &Grid2D, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    /// Copies one channel into a single-channel grid.
    pub fn channel(&self, ch: usize) -> Grid2D {
        let data = self.data.iter().skip(ch).step_by(self.channels).copied().collect();
        Grid2D {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Copies channels `[start, start + count)`.
    pub fn slice_channels(&self, start: usize, count: usize) -> Grid2D {
        let mut out = Grid2D::zeros(self.height, self.width, count);
        for cell in 0..self.height * self.width {
            let src = cell * self.channels + start;
            out.data[cell * count..(cell + 1) * count]
                .copy_from_slice(&self.data[src..src + count]);
        }
        out
    }

    /// Concatenates grids of equal spatial size along the channel axis.
    pub fn concat_channels(parts: &[&Grid2D]) -> Result<Grid2D> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("no grids to concatenate".into()))?;
        let (h, w) = (first.height, first.width);
        if parts.iter().any(|g| g.height != h || g.width != w) {
            return Err(Error::Shape("spatial sizes differ".into()));
        }
        let channels: usize = parts.iter().map(|g| g.channels).sum();
        let mut data = Vec::with_capacity(h * w * channels);
        for cell in 0..h * w {
            for g in parts {
                data.extend_from_slice(&g.data[cell * g.channels..(cell + 1) * g.channels]);
            }
        }
        Ok(Grid2D {
            height: h,
            width: w,
            channels,
            data,
        })
    }
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_angle(r: f64) -> Result<f64> {
    if !r.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    let mut a = r.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    Ok(a)
}

/// Footprint corners in canonical order: front-left, front-right, rear-right,
/// rear-left relative to the heading.
pub fn bev_corners(b: &Box3D) -> [Point2; 4] {
    let (s, c) = b.yaw.sin_cos();
    bev_corners_from_trig(b.cx, b.cy, b.l, b.w, c, s)
}

/// Same as [`bev_corners`] but with an explicit (not necessarily unit)
/// direction vector `(cos, sin)`.
pub fn bev_corners_from_trig(cx: f64, cy: f64, l: f64, w: f64, cos: f64, sin: f64) -> [Point2; 4] {
    let hl = 0.5 * l;
    let hw = 0.5 * w;
    let local = [[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]];
    local.map(|[x, y]| [cx + cos * x - sin * y, cy + sin * x + cos * y])
}

/// Eight box corners: the footprint at the bottom face then at the top face.
pub fn corners_3d(b: &Box3D) -> [Point3; 8] {
    let bev = bev_corners(b);
    let mut out = [[0.0; 3]; 8];
    for (i, p) in bev.iter().enumerate() {
        out[i] = [p[0], p[1], b.z_min()];
        out[i + 4] = [p[0], p[1], b.z_max()];
    }
    out
}

/// Inverse of [`corners_3d`] for corners in canonical order.
pub fn box_from_corners(c: &[Point3; 8]) -> Result<Box3D> {
    let mut center = [0.0; 3];
    for p in c {
        for k in 0..3 {
            center[k] += p[k] / 8.0;
        }
    }
    let dist = |a: Point3, b: Point3| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let l = dist(c[0], c[3]);
    let w = dist(c[0], c[1]);
    let h = c[4][2] - c[0][2];
    // Heading points from the rear-left corner to the front-left corner.
    let yaw = (c[0][1] - c[3][1]).atan2(c[0][0] - c[3][0]);
    Box3D::new(center[0], center[1], center[2], l, w, h, yaw)
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Shoelace area; positive for counter-clockwise polygons.
pub fn polygon_area(poly: &[Point2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * acc
}

/// Sutherland-Hodgman clipping of `subject` by the convex CCW polygon `clip`.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut output: Vec<Point2> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        let mut prev = *input.last().unwrap();
        let mut prev_in = cross(a, b, prev) >= 0.0;
        for &cur in &input {
            let cur_in = cross(a, b, cur) >= 0.0;
            if cur_in != prev_in {
                let d1 = cross(a, b, prev);
                let d2 = cross(a, b, cur);
                let t = d1 / (d1 - d2);
                output.push([prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])]);
            }
            if cur_in {
                output.push(cur);
            }
            prev = cur;
            prev_in = cur_in;
        }
    }
    output
}

fn ccw_footprint(b: &Box3D) -> [Point2; 4] {
    // Canonical order is clockwise; reverse it for clipping.
    let [fl, fr, rr, rl] = bev_corners(b);
    [rl, rr, fr, fl]
}

/// Area of the intersection of two box footprints.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    let pa = ccw_footprint(a);
    let pb = ccw_footprint(b);
    let area = polygon_area(&clip_convex(&pa, &pb));
    if area < AREA_EPS {
        0.0
    } else {
        area
    }
}

/// Rotated IoU of the two box footprints.
pub fn rotated_iou_bev(a: &Box3D, b: &Box3D) -> f64 {
    let inter = bev_intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.bev_area() + b.bev_area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Rotated 3D IoU: footprint intersection times vertical overlap.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let dz = a.z_max().min(b.z_max()) - a.z_min().max(b.z_min());
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Bilinear sample of channel 0 of `map` at column `u`, row `v`.
pub fn bilinear_sample(map: &Grid2D, u: f64, v: f64) -> f64 {
    bilinear_sample_channel(map, 0, u, v)
}

/// Bilinear sample with zero padding outside the grid. Cell `(row, col)` sits
/// at integer coordinates `(v, u) = (row, col)`.
pub fn bilinear_sample_channel(map: &Grid2D, ch: usize, u: f64, v: f64) -> f64 {
    let c0 = u.floor();
    let r0 = v.floor();
    let fu = u - c0;
    let fv = v - r0;
    let mut acc = 0.0;
    for (dr, wr) in [(0i64, 1.0 - fv), (1, fv)] {
        let row = r0 as i64 + dr;
        if wr == 0.0 || row < 0 || row >= map.height as i64 {
            continue;
        }
        for (dc, wc) in [(0i64, 1.0 - fu), (1, fu)] {
            let col = c0 as i64 + dc;
            if wc == 0.0 || col < 0 || col >= map.width as i64 {
                continue;
            }
            acc += map.get(row as usize, col as usize, ch) * wr * wc;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn wrap_angle_examples() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert!(close(wrap_angle(1.5 * PI).unwrap(), -0.5 * PI, 1e-12));
        assert_eq!(wrap_angle(-PI).unwrap(), PI);
        assert_eq!(wrap_angle(PI).unwrap(), PI);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn bev_corners_axis_aligned_and_rotated() {
        let b = Box3D::new(0.0, 0.0, 0.0, 4.0, 2.0, 1.0, 0.0).unwrap();
        assert_eq!(bev_corners(&b), [[2.0, 1.0], [2.0, -1.0], [-2.0, -1.0], [-2.0, 1.0]]);
        let r = Box3D { yaw: 0.5 * PI, ..b };
        let expect = [[-1.0, 2.0], [1.0, 2.0], [1.0, -2.0], [-1.0, -2.0]];
        for (p, q) in bev_corners(&r).iter().zip(expect) {
            assert!(close(p[0], q[0], 1e-12) && close(p[1], q[1], 1e-12));
        }
    }

    #[test]
    fn corners_3d_axis_aligned() {
        let b = Box3D::new(0.0, 0.0, 1.0, 4.0, 2.0, 2.0, 0.0).unwrap();
        let c = corners_3d(&b);
        for p in &c[..4] {
            assert_eq!(p[2], 0.0);
        }
        for p in &c[4..] {
            assert_eq!(p[2], 2.0);
        }
        for p in &c {
            assert_eq!(p[0].abs(), 2.0);
            assert_eq!(p[1].abs(), 1.0);
        }
    }

    #[test]
    fn zero_height_rejected() {
        assert!(Box3D::new(0.0, 0.0, 1.0, 4.0, 2.0, 0.0, 0.0).is_err());
        assert!(Box3D::new(0.0, 0.0, 1.0, -1.0, 2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn iou_examples() {
        let a = Box3D::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert!(close(rotated_iou_bev(&a, &a), 1.0, 1e-12));
        let b = Box3D { cx: 0.5, ..a };
        assert!(close(rotated_iou_bev(&a, &b), 1.0 / 3.0, 1e-12));
        let c = Box3D { yaw: 0.25 * PI, ..a };
        let octagon = 2.0 * (2f64.sqrt() - 1.0);
        assert!(close(rotated_iou_bev(&a, &c), octagon / (2.0 - octagon), 1e-12));
        assert!(close(rotated_iou_bev(&a, &c), 0.70711, 1e-5));
    }

    #[test]
    fn iou_3d_examples() {
        let a = Box3D::new(1.0, 2.0, 0.0, 3.0, 2.0, 2.0, 0.3).unwrap();
        assert!(close(iou_3d(&a, &a), 1.0, 1e-12));
        let up = Box3D { cz: 1.0, ..a };
        assert!(close(iou_3d(&a, &up), 1.0 / 3.0, 1e-12));
        let far = Box3D { cz: 5.0, ..a };
        assert_eq!(iou_3d(&a, &far), 0.0);
    }

    #[test]
    fn disjoint_and_touching_footprints_are_zero() {
        let a = Box3D::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let touching = Box3D { cx: 1.0, ..a };
        let far = Box3D { cx: 10.0, ..a };
        assert_eq!(rotated_iou_bev(&a, &touching), 0.0);
        assert_eq!(rotated_iou_bev(&a, &far), 0.0);
    }

    #[test]
    fn bilinear_examples() {
        let g = Grid2D::from_vec(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(bilinear_sample(&g, 1.0, 0.0), 1.0);
        assert_eq!(bilinear_sample(&g, 0.5, 0.5), 1.5);
        assert_eq!(bilinear_sample(&g, -0.5, 0.0), 0.0);
        let g = Grid2D::from_vec(2, 2, 1, vec![4.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(bilinear_sample(&g, -0.5, 0.0), 2.0);
        assert_eq!(bilinear_sample(&g, 5.0, 5.0), 0.0);
    }

    #[test]
    fn grid_channel_helpers() {
        let g = Grid2D::from_vec(1, 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(g.channel(1).data, vec![2.0, 5.0]);
        let s = g.slice_channels(1, 2);
        assert_eq!(s.data, vec![2.0, 3.0, 5.0, 6.0]);
        let c = Grid2D::concat_channels(&[&g.slice_channels(0, 1), &s]).unwrap();
        assert_eq!(c, g);
        assert!(Grid2D::from_vec(2, 2, 1, vec![0.0; 3]).is_err());
    }
}
