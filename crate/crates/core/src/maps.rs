//! Dense per-cell maps emitted by a detection head (or built from targets).

use crate::error::{Error, Result};
use crate::geom::Grid2D;
use crate::targets::TargetSet;

/// The eight box-regression channels, split by meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionMaps {
    /// `(dx, dy)` sub-cell offsets in `[0, 1)`.
    pub offset: Grid2D,
    pub z: Grid2D,
    /// `(l, w, h)`.
    pub size: Grid2D,
    /// `(cos, sin)` of the yaw.
    pub direction: Grid2D,
}

impl RegressionMaps {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            offset: Grid2D::zeros(rows, cols, 2),
            z: Grid2D::zeros(rows, cols, 1),
            size: Grid2D::zeros(rows, cols, 3),
            direction: Grid2D::zeros(rows, cols, 2),
        }
    }

    pub fn rows(&self) -> usize {
        self.offset.height
    }

    pub fn cols(&self) -> usize {
        self.offset.width
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.offset.height, self.offset.width);
        for (name, g, c) in [
            ("offset", &self.offset, 2),
            ("z", &self.z, 1),
            ("size", &self.size, 3),
            ("direction", &self.direction, 2),
        ] {
            if g.shape() != (h, w, c) {
                return Err(Error::Shape(format!(
                    "{name} map is {:?}, expected ({h}, {w}, {c})",
                    g.shape()
                )));
            }
        }
        Ok(())
    }

    /// The packed `[dx, dy, z, l, w, h, cos, sin]` vector at a cell.
    pub fn vector_at(&self, row: usize, col: usize) -> [f64; 8] {
        [
            self.offset.get(row, col, 0),
            self.offset.get(row, col, 1),
            self.z.get(row, col, 0),
            self.size.get(row, col, 0),
            self.size.get(row, col, 1),
            self.size.get(row, col, 2),
            self.direction.get(row, col, 0),
            self.direction.get(row, col, 1),
        ]
    }

    /// Adds a packed 8-vector into the maps at a cell.
    pub fn add_vector_at(&mut self, row: usize, col: usize, v: &[f64; 8]) {
        let add = |g: &mut Grid2D, ch: usize, x: f64| {
            let i = g.index(row, col, ch);
            g.data[i] += x;
        };
        add(&mut self.offset, 0, v[0]);
        add(&mut self.offset, 1, v[1]);
        add(&mut self.z, 0, v[2]);
        add(&mut self.size, 0, v[3]);
        add(&mut self.size, 1, v[4]);
        add(&mut self.size, 2, v[5]);
        add(&mut self.direction, 0, v[6]);
        add(&mut self.direction, 1, v[7]);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMaps {
    /// Per-class center heatmap in `(0, 1)`.
    pub center_heat: Grid2D,
    /// Per-class corner heatmap; absent when the corner module is disabled.
    pub corner_heat: Option<Grid2D>,
    pub reg: RegressionMaps,
}

impl PredictionMaps {
    /// The ideal prediction: targets copied verbatim.
    pub fn from_targets(t: &TargetSet) -> Self {
        Self {
            center_heat: t.center_heat.clone(),
            corner_heat: Some(t.corner_heat.clone()),
            reg: RegressionMaps {
                offset: t.offset.clone(),
                z: t.z.clone(),
                size: t.size.clone(),
                direction: t.direction.clone(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.reg.validate()?;
        let (h, w) = (self.reg.rows(), self.reg.cols());
        if self.center_heat.height != h || self.center_heat.width != w {
            return Err(Error::Shape("center heatmap size differs from regression maps".into()));
        }
        if let Some(c) = &self.corner_heat {
            self.center_heat.ensure_shape(c, "corner heatmap")?;
        }
        Ok(())
    }
}
