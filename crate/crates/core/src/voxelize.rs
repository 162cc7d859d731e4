//! Regular voxel grid with mean voxel features, and its height-collapsed BEV
//! plane.
//!
//! Index conventions: voxel `(ix, iy, iz)` counts cells from the range minima
//! along x, y, z. In every BEV map the row follows x and the column follows
//! y, so voxel `(ix, iy)` lands in feature cell `(ix / R, iy / R)`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geom::Grid2D;
use crate::pointcloud::PointCloud;

/// Channels produced by [`bev_collapse`].
pub const BEV_CHANNELS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    /// Half-open `[min, max)` extents in meters.
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub z_range: (f64, f64),
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    /// Feature-map stride relative to voxel cells.
    pub downsample: usize,
    /// Points kept per voxel; later points are ignored.
    pub max_points_per_voxel: usize,
}

impl Default for GridConfig {
    /// KITTI crop: x in [0, 70), y in [-40, 40), z in [-3, 1), with
    /// 0.05 x 0.05 x 0.1 m voxels.
    fn default() -> Self {
        Self {
            x_range: (0.0, 70.0),
            y_range: (-40.0, 40.0),
            z_range: (-3.0, 1.0),
            vx: 0.05,
            vy: 0.05,
            vz: 0.1,
            downsample: 4,
            max_points_per_voxel: 5,
        }
    }
}

fn cell_count(range: (f64, f64), size: f64, axis: &str) -> Result<usize> {
    let n = (range.1 - range.0) / size;
    let rounded = n.round();
    if !(size > 0.0) || rounded < 1.0 || (n - rounded).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "{axis} extent {:?} is not a positive multiple of voxel size {size}",
            range
        )));
    }
    Ok(rounded as usize)
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        let (nx, ny, _) = self.cells()?;
        let r = self.downsample;
        if r == 0 || nx % r != 0 || ny % r != 0 {
            return Err(Error::Config(format!(
                "downsample {r} must be >= 1 and divide the x/y cell counts {nx}x{ny}"
            )));
        }
        if self.max_points_per_voxel == 0 {
            return Err(Error::Config("max_points_per_voxel must be >= 1".into()));
        }
        Ok(())
    }

    /// Voxel counts along x, y, z.
    pub fn cells(&self) -> Result<(usize, usize, usize)> {
        Ok((
            cell_count(self.x_range, self.vx, "x")?,
            cell_count(self.y_range, self.vy, "y")?,
            cell_count(self.z_range, self.vz, "z")?,
        ))
    }

    /// Feature-map (rows, columns) at stride `downsample`.
    pub fn feature_shape(&self) -> (usize, usize) {
        let (nx, ny, _) = self.cells().expect("validated grid config");
        (nx / self.downsample, ny / self.downsample)
    }

    /// Feature-cell edge lengths in meters along x and y.
    pub fn feature_cell_size(&self) -> (f64, f64) {
        let r = self.downsample as f64;
        (self.vx * r, self.vy * r)
    }

    /// Continuous feature-map coordinates `(x / (vx R), y / (vy R))` of a
    /// LiDAR-frame point, measured from the range minima.
    pub fn to_feature(&self, x: f64, y: f64) -> (f64, f64) {
        let (sx, sy) = self.feature_cell_size();
        ((x - self.x_range.0) / sx, (y - self.y_range.0) / sy)
    }

    pub fn from_feature(&self, fx: f64, fy: f64) -> (f64, f64) {
        let (sx, sy) = self.feature_cell_size();
        (self.x_range.0 + fx * sx, self.y_range.0 + fy * sy)
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= self.x_range.0 && x < self.x_range.1 && y >= self.y_range.0 && y < self.y_range.1
    }

    fn voxel_index(&self, x: f64, y: f64, z: f64, cells: (usize, usize, usize)) -> Option<(usize, usize, usize)> {
        let axis = |p: f64, (lo, hi): (f64, f64), v: f64, n: usize| -> Option<usize> {
            if !(p >= lo && p < hi) {
                return None;
            }
            Some((((p - lo) / v).floor() as usize).min(n - 1))
        };
        Some((
            axis(x, self.x_range, self.vx, cells.0)?,
            axis(y, self.y_range, self.vy, cells.1)?,
            axis(z, self.z_range, self.vz, cells.2)?,
        ))
    }
}

/// Mean feature of the points retained in one voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelFeature {
    pub mean: [f64; 4],
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub config: GridConfig,
    pub occupied: BTreeMap<(usize, usize, usize), VoxelFeature>,
}

impl VoxelGrid {
    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    /// Total number of points retained across voxels.
    pub fn retained_points(&self) -> usize {
        self.occupied.values().map(|v| v.count).sum()
    }
}

/// Bins points into voxels, keeping up to `max_points_per_voxel` per voxel in
/// input order and storing their mean `(x, y, z, intensity)`.
pub fn voxelize_mean(cloud: &PointCloud, config: &GridConfig) -> Result<VoxelGrid> {
    config.validate()?;
    let cells = config.cells()?;
    let cap = config.max_points_per_voxel;
    let mut sums: BTreeMap<(usize, usize, usize), ([f64; 4], usize)> = BTreeMap::new();
    for p in &cloud.points {
        let Some(idx) = config.voxel_index(p.x, p.y, p.z, cells) else {
            continue;
        };
        let entry = sums.entry(idx).or_insert(([0.0; 4], 0));
        if entry.1 >= cap {
            continue;
        }
        for (acc, v) in entry.0.iter_mut().zip([p.x, p.y, p.z, p.intensity]) {
            *acc += v;
        }
        entry.1 += 1;
    }
    let occupied = sums
        .into_iter()
        .map(|(k, (sum, count))| {
            let mean = sum.map(|s| s / count as f64);
            (k, VoxelFeature { mean, count })
        })
        .collect();
    Ok(VoxelGrid {
        config: config.clone(),
        occupied,
    })
}

/// Collapses the height axis at the configured stride `R`.
pub fn bev_collapse(grid: &VoxelGrid) -> Result<Grid2D> {
    bev_collapse_with_stride(grid, grid.config.downsample)
}

/// Collapses the height axis, pooling `stride x stride` voxel columns into one
/// output cell. Channels:
///
/// 0. occupied-voxel count divided by `stride^2 * z_cells`
/// 1. mean z of retained points
/// 2. mean intensity of retained points
/// 3. highest occupied voxel center z
///
/// These are fixed hand features standing in for a learned encoder.
pub fn bev_collapse_with_stride(grid: &VoxelGrid, stride: usize) -> Result<Grid2D> {
    let (nx, ny, nz) = grid.config.cells()?;
    if stride == 0 || nx % stride != 0 || ny % stride != 0 {
        return Err(Error::Config(format!(
            "stride {stride} must divide the x/y cell counts {nx}x{ny}"
        )));
    }
    let (h, w) = (nx / stride, ny / stride);
    let mut out = Grid2D::zeros(h, w, BEV_CHANNELS);
    let mut voxels = vec![0usize; h * w];
    let mut points = vec![0usize; h * w];
    let mut max_z = vec![f64::NEG_INFINITY; h * w];
    let norm = (stride * stride * nz) as f64;
    for (&(ix, iy, iz), v) in &grid.occupied {
        let cell = (ix / stride) * w + iy / stride;
        voxels[cell] += 1;
        points[cell] += v.count;
        let n = v.count as f64;
        out.data[cell * BEV_CHANNELS + 1] += v.mean[2] * n;
        out.data[cell * BEV_CHANNELS + 2] += v.mean[3] * n;
        let zc = grid.config.z_range.0 + (iz as f64 + 0.5) * grid.config.vz;
        max_z[cell] = max_z[cell].max(zc);
    }
    for cell in 0..h * w {
        if voxels[cell] == 0 {
            continue;
        }
        let base = cell * BEV_CHANNELS;
        out.data[base] = voxels[cell] as f64 / norm;
        out.data[base + 1] /= points[cell] as f64;
        out.data[base + 2] /= points[cell] as f64;
        out.data[base + 3] = max_z[cell];
    }
    Ok(out)
}
