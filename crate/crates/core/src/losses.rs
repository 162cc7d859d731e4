//! Training objectives and their analytic gradients with respect to the
//! (already activated) predicted maps.
//!
//! Every loss is normalized by `max(N, 1)` where `N` is the number of
//! ground-truth objects in the frame.

use crate::error::{Error, Result};
use crate::geom::{Grid2D, Point3};
use crate::maps::{PredictionMaps, RegressionMaps};
use crate::targets::{Positive, TargetSet};
use crate::voxelize::GridConfig;

/// Heatmap predictions are clamped to `[EPS, 1 - EPS]` before logarithms.
pub const PRED_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeLoss {
    Balanced,
    L1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Focal exponents.
    pub alpha: f64,
    pub beta: f64,
    /// Balanced-L1 shape; `b` and the linear-branch constant follow from these.
    pub a: f64,
    pub gamma: f64,
    pub w_cls: f64,
    pub w_off: f64,
    pub w_z: f64,
    pub w_size: f64,
    pub w_dir: f64,
    pub w_cor: f64,
    pub w_decode: f64,
    pub size_loss: SizeLoss,
    /// Divide the decode loss by 8 as well as by `N`.
    pub decode_corner_mean: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 4.0,
            a: 0.5,
            gamma: 1.5,
            w_cls: 0.5,
            w_off: 1.0,
            w_z: 1.0,
            w_size: 1.0,
            w_dir: 1.0,
            w_cor: 0.1,
            w_decode: 0.5,
            size_loss: SizeLoss::Balanced,
            decode_corner_mean: false,
        }
    }
}

impl LossConfig {
    /// `b` from `a ln(b + 1) = gamma`.
    pub fn b(&self) -> f64 {
        (self.gamma / self.a).exp() - 1.0
    }

    /// Linear-branch offset making the two balanced-L1 branches meet at
    /// `|x| = 1`: `gamma / b - a`.
    pub fn c_b(&self) -> f64 {
        self.gamma / self.b() - self.a
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.gamma > 0.0 && self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::Config("loss shape parameters out of range".into()));
        }
        let weights = [
            self.w_cls,
            self.w_off,
            self.w_z,
            self.w_size,
            self.w_dir,
            self.w_cor,
            self.w_decode,
        ];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

fn norm(n: usize) -> f64 {
    n.max(1) as f64
}

/// Penalty-reduced pixel-wise focal loss over every cell and channel.
pub fn focal_heatmap_loss(
    pred: &Grid2D,
    target: &Grid2D,
    alpha: f64,
    beta: f64,
    n: usize,
) -> Result<(f64, Grid2D)> {
    pred.ensure_shape(target, "focal loss")?;
    let scale = 1.0 / norm(n);
    let mut grad = Grid2D::zeros(pred.height, pred.width, pred.channels);
    let mut value = 0.0;
    for (i, (&raw, &y)) in pred.data.iter().zip(&target.data).enumerate() {
        let p = raw.clamp(PRED_EPS, 1.0 - PRED_EPS);
        let inside = p == raw;
        let (term, dterm) = if y == 1.0 {
            let q = 1.0 - p;
            let t = q.powf(alpha) * p.ln();
            let d = -alpha * q.powf(alpha - 1.0) * p.ln() + q.powf(alpha) / p;
            (t, d)
        } else {
            let wneg = (1.0 - y).powf(beta);
            let l1p = (1.0 - p).ln();
            let t = wneg * p.powf(alpha) * l1p;
            let d = wneg * (alpha * p.powf(alpha - 1.0) * l1p - p.powf(alpha) / (1.0 - p));
            (t, d)
        };
        value -= term * scale;
        if inside {
            grad.data[i] = -dterm * scale;
        }
    }
    Ok((value, grad))
}

fn check_positive(p: &Positive, g: &Grid2D) -> Result<()> {
    if p.row >= g.height || p.col >= g.width {
        return Err(Error::OutOfRange(format!(
            "positive ({}, {}) outside {}x{} map",
            p.row, p.col, g.height, g.width
        )));
    }
    Ok(())
}

/// Sum of absolute residuals over all channels at positive cells.
pub fn masked_l1_loss(
    pred: &Grid2D,
    target: &Grid2D,
    positives: &[Positive],
    n: usize,
) -> Result<(f64, Grid2D)> {
    masked_elementwise(pred, target, positives, n, |r| (r.abs(), r.signum_or_zero()))
}

/// Balanced L1 of each channel residual at positive cells.
pub fn masked_balanced_loss(
    pred: &Grid2D,
    target: &Grid2D,
    positives: &[Positive],
    n: usize,
    cfg: &LossConfig,
) -> Result<(f64, Grid2D)> {
    masked_elementwise(pred, target, positives, n, |r| balanced_l1(r, cfg))
}

fn masked_elementwise(
    pred: &Grid2D,
    target: &Grid2D,
    positives: &[Positive],
    n: usize,
    f: impl Fn(f64) -> (f64, f64),
) -> Result<(f64, Grid2D)> {
    pred.ensure_shape(target, "masked loss")?;
    let scale = 1.0 / norm(n);
    let mut grad = Grid2D::zeros(pred.height, pred.width, pred.channels);
    let mut value = 0.0;
    for p in positives {
        check_positive(p, pred)?;
        for ch in 0..pred.channels {
            let i = pred.index(p.row, p.col, ch);
            let (v, d) = f(pred.data[i] - target.data[i]);
            value += v * scale;
            grad.data[i] += d * scale;
        }
    }
    Ok((value, grad))
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// Balanced L1 value and derivative at residual `x`.
pub fn balanced_l1(x: f64, cfg: &LossConfig) -> (f64, f64) {
    let ax = x.abs();
    let sign = x.signum_or_zero();
    if ax < 1.0 {
        let b = cfg.b();
        let bx1 = b * ax + 1.0;
        let value = cfg.a / b * bx1 * bx1.ln() - cfg.a * ax;
        (value, sign * cfg.a * bx1.ln())
    } else {
        (cfg.gamma * ax + cfg.c_b(), sign * cfg.gamma)
    }
}

/// Decodes a packed regression vector at feature cell `(row, col)` into eight
/// corners, building the footprint from the raw `(cos, sin)` channels, and
/// returns the Jacobian `d corner[k][axis] / d v[j]`.
pub fn decode_corners_with_jacobian(
    v: &[f64; 8],
    row: usize,
    col: usize,
    grid: &GridConfig,
) -> ([Point3; 8], [[[f64; 8]; 3]; 8]) {
    let (sx, sy) = grid.feature_cell_size();
    let [ox, oy, z, l, w, h, c, s] = *v;
    let cx = grid.x_range.0 + (row as f64 + ox) * sx;
    let cy = grid.y_range.0 + (col as f64 + oy) * sy;
    let signs = [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)];
    let mut corners = [[0.0; 3]; 8];
    let mut jac = [[[0.0; 8]; 3]; 8];
    for (k, corner) in corners.iter_mut().enumerate() {
        let (ax, ay) = signs[k % 4];
        let az = if k < 4 { -1.0 } else { 1.0 };
        let lx = 0.5 * ax * l;
        let ly = 0.5 * ay * w;
        *corner = [cx + c * lx - s * ly, cy + s * lx + c * ly, z + 0.5 * az * h];
        let j = &mut jac[k];
        j[0][0] = sx;
        j[0][3] = 0.5 * ax * c;
        j[0][4] = -0.5 * ay * s;
        j[0][6] = lx;
        j[0][7] = -ly;
        j[1][1] = sy;
        j[1][3] = 0.5 * ax * s;
        j[1][4] = 0.5 * ay * c;
        j[1][6] = ly;
        j[1][7] = lx;
        j[2][2] = 1.0;
        j[2][5] = 0.5 * az;
    }
    (corners, jac)
}

/// Balanced L1 on the Euclidean distance between each decoded corner and its
/// ground-truth counterpart, summed over corners and positives.
pub fn decode_loss(
    reg: &RegressionMaps,
    positives: &[Positive],
    gt_corners: &[[Point3; 8]],
    grid: &GridConfig,
    n: usize,
    cfg: &LossConfig,
) -> Result<(f64, RegressionMaps)> {
    reg.validate()?;
    if gt_corners.len() < positives.len() {
        return Err(Error::Shape(format!(
            "{} positives but only {} ground-truth corner sets",
            positives.len(),
            gt_corners.len()
        )));
    }
    let mut scale = 1.0 / norm(n);
    if cfg.decode_corner_mean {
        scale /= 8.0;
    }
    let mut grad = RegressionMaps::zeros(reg.rows(), reg.cols());
    let mut value = 0.0;
    for (p, gt) in positives.iter().zip(gt_corners) {
        check_positive(p, &reg.offset)?;
        let v = reg.vector_at(p.row, p.col);
        let (pred, jac) = decode_corners_with_jacobian(&v, p.row, p.col, grid);
        let mut g = [0.0; 8];
        for k in 0..8 {
            let d = [pred[k][0] - gt[k][0], pred[k][1] - gt[k][1], pred[k][2] - gt[k][2]];
            let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let (lb, dlb) = balanced_l1(dist, cfg);
            value += lb * scale;
            if dist == 0.0 {
                continue;
            }
            for axis in 0..3 {
                let dp = dlb * d[axis] / dist * scale;
                for (gj, jj) in g.iter_mut().zip(&jac[k][axis]) {
                    *gj += dp * jj;
                }
            }
        }
        grad.add_vector_at(p.row, p.col, &g);
    }
    Ok((value, grad))
}

/// Per-term loss values; every term must be present to form the total.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub cls: Option<f64>,
    pub off: Option<f64>,
    pub z: Option<f64>,
    pub size: Option<f64>,
    pub dir: Option<f64>,
    pub cor: Option<f64>,
    pub decode: Option<f64>,
}

impl LossTerms {
    pub fn named(&self) -> [(&'static str, Option<f64>); 7] {
        [
            ("cls", self.cls),
            ("off", self.off),
            ("z", self.z),
            ("size", self.size),
            ("dir", self.dir),
            ("cor", self.cor),
            ("decode", self.decode),
        ]
    }
}

/// Weighted sum of the seven loss terms.
pub fn total_loss(terms: &LossTerms, cfg: &LossConfig) -> Result<f64> {
    let weights = [
        cfg.w_cls, cfg.w_off, cfg.w_z, cfg.w_size, cfg.w_dir, cfg.w_cor, cfg.w_decode,
    ];
    let mut total = 0.0;
    for ((name, value), w) in terms.named().into_iter().zip(weights) {
        total += w * value.ok_or(Error::MissingTerm(name))?;
    }
    Ok(total)
}

/// Loss values plus gradients of the weighted total with respect to every
/// predicted map.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub terms: LossTerms,
    pub total: f64,
    pub grads: PredictionMaps,
}

/// Evaluates every objective for one frame.
pub fn compute_losses(
    pred: &PredictionMaps,
    targets: &TargetSet,
    grid: &GridConfig,
    cfg: &LossConfig,
) -> Result<LossReport> {
    pred.validate()?;
    let n = targets.positives.len();
    let pos = &targets.positives;

    let (cls, g_center) =
        focal_heatmap_loss(&pred.center_heat, &targets.center_heat, cfg.alpha, cfg.beta, n)?;
    let (cor, g_corner) = match &pred.corner_heat {
        Some(a) => {
            let (v, g) = focal_heatmap_loss(a, &targets.corner_heat, cfg.alpha, cfg.beta, n)?;
            (v, Some(g))
        }
        None => (0.0, None),
    };
    let (off, g_off) = masked_l1_loss(&pred.reg.offset, &targets.offset, pos, n)?;
    let (dir, g_dir) = masked_l1_loss(&pred.reg.direction, &targets.direction, pos, n)?;
    let (z, g_z) = masked_balanced_loss(&pred.reg.z, &targets.z, pos, n, cfg)?;
    let (size, g_size) = match cfg.size_loss {
        SizeLoss::Balanced => masked_balanced_loss(&pred.reg.size, &targets.size, pos, n, cfg)?,
        SizeLoss::L1 => masked_l1_loss(&pred.reg.size, &targets.size, pos, n)?,
    };
    let (decode, g_decode) = if cfg.w_decode > 0.0 {
        decode_loss(&pred.reg, pos, &targets.gt_corners, grid, n, cfg)?
    } else {
        (0.0, RegressionMaps::zeros(pred.reg.rows(), pred.reg.cols()))
    };

    let terms = LossTerms {
        cls: Some(cls),
        off: Some(off),
        z: Some(z),
        size: Some(size),
        dir: Some(dir),
        cor: Some(cor),
        decode: Some(decode),
    };
    let total = total_loss(&terms, cfg)?;

    let combine = |a: Grid2D, wa: f64, b: &Grid2D| -> Grid2D {
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| wa * x + cfg.w_decode * y)
            .collect();
        Grid2D { data, ..a }
    };
    let scaled = |g: Grid2D, w: f64| Grid2D {
        data: g.data.iter().map(|v| v * w).collect(),
        ..g
    };
    let grads = PredictionMaps {
        center_heat: scaled(g_center, cfg.w_cls),
        corner_heat: g_corner.map(|g| scaled(g, cfg.w_cor)),
        reg: RegressionMaps {
            offset: combine(g_off, cfg.w_off, &g_decode.offset),
            z: combine(g_z, cfg.w_z, &g_decode.z),
            size: combine(g_size, cfg.w_size, &g_decode.size),
            direction: combine(g_dir, cfg.w_dir, &g_decode.direction),
        },
    };
    Ok(LossReport {
        terms,
        total,
        grads,
    })
}
