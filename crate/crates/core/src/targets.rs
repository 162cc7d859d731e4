//! Training targets: Gaussian center and corner heatmaps, plus offset, z,
//! size and direction regression maps at one positive cell per box.

use std::fmt::Write as _;
use std::path::Path;

use crate::dump;
use crate::error::{Error, Result};
use crate::geom::{bev_corners, corners_3d, Box3D, Grid2D, Point3};
use crate::voxelize::GridConfig;

/// Lower bound on the heatmap standard deviation, in feature cells.
pub const MIN_SIGMA: f64 = 1.0 / 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub grid: GridConfig,
    pub num_classes: usize,
    /// IoU that any center inside the Gaussian radius must still reach.
    pub min_overlap: f64,
}

impl EncoderConfig {
    pub fn new(grid: GridConfig, num_classes: usize) -> Self {
        Self {
            grid,
            num_classes,
            min_overlap: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be >= 1".into()));
        }
        if !(self.min_overlap > 0.0 && self.min_overlap <= 1.0) {
            return Err(Error::Config(format!(
                "min_overlap {} outside (0, 1]",
                self.min_overlap
            )));
        }
        Ok(())
    }
}

/// Feature cell of a positive and the class it supervises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Positive {
    pub row: usize,
    pub col: usize,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    /// `C` channels in `[0, 1]`.
    pub center_heat: Grid2D,
    /// `C` channels in `[0, 1]`, one splat per footprint corner.
    pub corner_heat: Grid2D,
    /// Sub-cell center offset `(dx, dy)` in `[0, 1)`.
    pub offset: Grid2D,
    pub z: Grid2D,
    /// `(l, w, h)` in meters.
    pub size: Grid2D,
    /// `(cos yaw, sin yaw)`.
    pub direction: Grid2D,
    /// Eight box corners per positive, aligned with `positives`.
    pub gt_corners: Vec<[Point3; 8]>,
    pub positives: Vec<Positive>,
    /// Boxes that landed on an already-claimed positive cell and class.
    pub collisions: usize,
}

impl TargetSet {
    pub fn empty(rows: usize, cols: usize, num_classes: usize) -> Self {
        Self {
            center_heat: Grid2D::zeros(rows, cols, num_classes),
            corner_heat: Grid2D::zeros(rows, cols, num_classes),
            offset: Grid2D::zeros(rows, cols, 2),
            z: Grid2D::zeros(rows, cols, 1),
            size: Grid2D::zeros(rows, cols, 3),
            direction: Grid2D::zeros(rows, cols, 2),
            gt_corners: Vec::new(),
            positives: Vec::new(),
            collisions: 0,
        }
    }

    /// Writes each map in the grid dump format plus `positives.txt`, whose
    /// lines read `row col class` followed by the 24 corner coordinates.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let maps = [
            ("center", &self.center_heat),
            ("corner", &self.corner_heat),
            ("offset", &self.offset),
            ("z", &self.z),
            ("size", &self.size),
            ("direction", &self.direction),
        ];
        for (name, grid) in maps {
            let path = dir.join(format!("{name}.grid"));
            std::fs::write(&path, dump::grid_to_bytes(grid)).map_err(|e| Error::file(&path, e))?;
        }
        let mut side = String::new();
        for (p, corners) in self.positives.iter().zip(&self.gt_corners) {
            let _ = write!(side, "{} {} {}", p.row, p.col, p.class);
            for c in corners {
                let _ = write!(side, " {} {} {}", c[0], c[1], c[2]);
            }
            side.push('\n');
        }
        let path = dir.join("positives.txt");
        std::fs::write(&path, side).map_err(|e| Error::file(&path, e))?;
        Ok(())
    }
}

/// Largest center displacement (in cells) that keeps a same-size box above
/// IoU `t`, taken as the minimum over three corner-displacement cases:
/// both corners shifted the same way, both moved inward, both moved outward.
pub fn gaussian_radius(l_cells: f64, w_cells: f64, t: f64) -> Result<f64> {
    if !(l_cells > 0.0 && w_cells > 0.0) {
        return Err(Error::Config(format!(
            "gaussian radius needs positive sizes, got {l_cells} x {w_cells}"
        )));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Config(format!("overlap {t} outside (0, 1]")));
    }
    let (h, w) = (l_cells, w_cells);
    let smaller_root = |a: f64, b: f64, c: f64| (-b - (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
    let larger_root = |a: f64, b: f64, c: f64| (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);

    // Translated box: (h-r)(w-r) / (2hw - (h-r)(w-r)) >= t.
    let r1 = smaller_root(1.0, -(h + w), h * w * (1.0 - t) / (1.0 + t));
    // Shrunk box: (h-2r)(w-2r) / hw >= t.
    let r2 = smaller_root(4.0, -2.0 * (h + w), (1.0 - t) * h * w);
    // Grown box: hw / ((h+2r)(w+2r)) >= t.
    let r3 = larger_root(4.0 * t, 2.0 * t * (h + w), (t - 1.0) * h * w);
    Ok(r1.min(r2).min(r3).max(0.0))
}

/// Splats `exp(-d^2 / (2 sigma^2))` around cell `(row, col)` of one channel,
/// keeping the element-wise max with existing values. The kernel covers a
/// `(2 ceil(3 sigma) + 1)^2` window; parts outside the grid are clipped.
pub fn draw_gaussian(heat: &mut Grid2D, channel: usize, row: i64, col: i64, sigma: f64) {
    assert!(sigma > 0.0, "sigma must be positive");
    let half = (3.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    for dr in -half..=half {
        let r = row + dr;
        if r < 0 || r >= heat.height as i64 {
            continue;
        }
        for dc in -half..=half {
            let c = col + dc;
            if c < 0 || c >= heat.width as i64 {
                continue;
            }
            let v = (-((dr * dr + dc * dc) as f64) / denom).exp();
            let i = heat.index(r as usize, c as usize, channel);
            if v > heat.data[i] {
                heat.data[i] = v;
            }
        }
    }
}

/// Heatmap standard deviation for a box: a sixth of its Gaussian radius,
/// floored at [`MIN_SIGMA`].
pub fn box_sigma(b: &Box3D, cfg: &EncoderConfig) -> Result<f64> {
    let (sx, sy) = cfg.grid.feature_cell_size();
    let radius = gaussian_radius(b.l / sx, b.w / sy, cfg.min_overlap)?;
    Ok((radius / 6.0).max(MIN_SIGMA))
}

/// Builds the training targets for one frame.
pub fn encode_targets(boxes: &[Box3D], classes: &[usize], cfg: &EncoderConfig) -> Result<TargetSet> {
    cfg.validate()?;
    if boxes.len() != classes.len() {
        return Err(Error::Shape(format!(
            "{} boxes but {} class ids",
            boxes.len(),
            classes.len()
        )));
    }
    let (rows, cols) = cfg.grid.feature_shape();
    let mut t = TargetSet::empty(rows, cols, cfg.num_classes);
    for (b, &class) in boxes.iter().zip(classes) {
        if class >= cfg.num_classes {
            return Err(Error::OutOfRange(format!(
                "class id {class} >= {}",
                cfg.num_classes
            )));
        }
        if !cfg.grid.contains_xy(b.cx, b.cy) {
            return Err(Error::OutOfRange(format!(
                "box center ({}, {}) outside the grid",
                b.cx, b.cy
            )));
        }
        let (fx, fy) = cfg.grid.to_feature(b.cx, b.cy);
        let (row, col) = (fx.floor(), fy.floor());
        let (row_u, col_u) = ((row as usize).min(rows - 1), (col as usize).min(cols - 1));
        let sigma = box_sigma(b, cfg)?;

        draw_gaussian(&mut t.center_heat, class, row_u as i64, col_u as i64, sigma);
        // Peak cells get exactly 1 even when a neighbor's splat overlaps.
        t.center_heat.set(row_u, col_u, class, 1.0);
        for corner in bev_corners(b) {
            let (cr, cc) = cfg.grid.to_feature(corner[0], corner[1]);
            draw_gaussian(&mut t.corner_heat, class, cr.floor() as i64, cc.floor() as i64, sigma);
        }

        t.offset.set(row_u, col_u, 0, fx - row);
        t.offset.set(row_u, col_u, 1, fy - col);
        t.z.set(row_u, col_u, 0, b.cz);
        for (k, v) in [b.l, b.w, b.h].into_iter().enumerate() {
            t.size.set(row_u, col_u, k, v);
        }
        let (s, c) = b.yaw.sin_cos();
        t.direction.set(row_u, col_u, 0, c);
        t.direction.set(row_u, col_u, 1, s);

        let pos = Positive {
            row: row_u,
            col: col_u,
            class,
        };
        let corners = corners_3d(b);
        let mut collided = false;
        for (p, c) in t.positives.iter().zip(t.gt_corners.iter_mut()) {
            if *p == pos {
                // Last writer wins: the shared cell now describes this box.
                *c = corners;
                collided = true;
            }
        }
        if collided {
            t.collisions += 1;
        }
        t.positives.push(pos);
        t.gt_corners.push(corners);
    }
    Ok(t)
}
