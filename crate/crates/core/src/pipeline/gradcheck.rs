//! Central finite-difference checks of every loss and network layer.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geom::{Box3D, Grid2D};
use crate::losses::{
    compute_losses, decode_loss, focal_heatmap_loss, masked_balanced_loss, masked_l1_loss, LossConfig,
};
use crate::maps::{PredictionMaps, RegressionMaps};
use crate::nn::{
    activate, activation_backward, build_head, conv2d, conv2d_backward, Activation, BackboneSpec, Detector,
    HeadSpec, HeadVariant, ParamStore, Tensor,
};
use crate::targets::{encode_targets, EncoderConfig, TargetSet};
use crate::voxelize::GridConfig;

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Smallest denominator of the relative error, so that vanishing gradient
/// components are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct OpResult {
    pub name: String,
    pub probes: usize,
    pub worst_rel: f64,
    pub worst_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub ops: Vec<OpResult>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.ops.iter().all(|o| o.worst_rel < self.tolerance)
    }

    pub fn failures(&self) -> Vec<&OpResult> {
        self.ops.iter().filter(|o| o.worst_rel >= self.tolerance).collect()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<22} {:>7} {:>12} {:>12} {:>6}", "operation", "probes", "worst_rel", "worst_abs", "ok");
        for o in &self.ops {
            let _ = writeln!(
                s,
                "{:<22} {:>7} {:>12.3e} {:>12.3e} {:>6}",
                o.name,
                o.probes,
                o.worst_rel,
                o.worst_abs,
                if o.worst_rel < self.tolerance { "yes" } else { "NO" }
            );
        }
        s
    }
}

/// Accumulates probes of one operation across random instances.
struct Probe {
    result: OpResult,
}

impl Probe {
    fn new(name: &str) -> Self {
        Self {
            result: OpResult {
                name: name.to_string(),
                probes: 0,
                worst_rel: 0.0,
                worst_abs: 0.0,
            },
        }
    }

    /// `f(i, delta)` evaluates the scalar with coordinate `i` shifted by
    /// `delta`; `grad[i]` is the analytic derivative.
    fn check(&mut self, f: impl Fn(usize, f64) -> f64, grad: &[f64], coords: &[usize]) {
        for &i in coords {
            let fd = (f(i, STEP) - f(i, -STEP)) / (2.0 * STEP);
            let abs = (fd - grad[i]).abs();
            let rel = abs / fd.abs().max(grad[i].abs()).max(REL_FLOOR);
            let r = &mut self.result;
            r.probes += 1;
            r.worst_rel = r.worst_rel.max(rel);
            r.worst_abs = r.worst_abs.max(abs);
        }
    }
}

fn pick(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|_| rng.gen_range(0..n)).collect()
}

fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, lo: f64, hi: f64) -> Grid2D {
    Grid2D::from_vec(h, w, c, (0..h * w * c).map(|_| rng.gen_range(lo..hi)).collect()).expect("sized")
}

fn small_grid() -> GridConfig {
    GridConfig {
        x_range: (0.0, 12.8),
        y_range: (-6.4, 6.4),
        z_range: (-3.0, 1.0),
        vx: 0.2,
        vy: 0.2,
        vz: 0.2,
        downsample: 4,
        max_points_per_voxel: 5,
    }
}

fn random_targets(rng: &mut ChaCha8Rng, grid: &GridConfig) -> TargetSet {
    let n = rng.gen_range(1..=3);
    let mut boxes = Vec::new();
    for _ in 0..n {
        boxes.push(
            Box3D::new(
                rng.gen_range(1.0..11.8),
                rng.gen_range(-5.4..5.4),
                rng.gen_range(-1.5..-0.5),
                rng.gen_range(3.0..4.5),
                rng.gen_range(1.4..1.9),
                rng.gen_range(1.3..1.8),
                rng.gen_range(-3.1..3.1),
            )
            .expect("valid box"),
        );
    }
    let classes = vec![0; boxes.len()];
    encode_targets(&boxes, &classes, &EncoderConfig::new(grid.clone(), 1)).expect("boxes inside grid")
}

/// Residual with magnitude in `[0.05, 1.5]` and random sign, away from the
/// L1 kink at zero.
fn residual(rng: &mut ChaCha8Rng) -> f64 {
    let m = rng.gen_range(0.05..1.5);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

/// Prediction maps near the targets: heatmaps in `(0.02, 0.98)`, regression
/// channels offset from the targets at positive cells.
fn predictions_near(rng: &mut ChaCha8Rng, t: &TargetSet) -> PredictionMaps {
    let (h, w, c) = t.center_heat.shape();
    let mut reg = RegressionMaps::zeros(h, w);
    for (g, tg) in [
        (&mut reg.offset, &t.offset),
        (&mut reg.z, &t.z),
        (&mut reg.size, &t.size),
        (&mut reg.direction, &t.direction),
    ] {
        for (v, tv) in g.data.iter_mut().zip(&tg.data) {
            *v = tv + residual(rng);
        }
    }
    // Keep sizes positive so decoded boxes stay boxes.
    reg.size.data.iter_mut().for_each(|v| *v = v.abs().max(0.3));
    PredictionMaps {
        center_heat: random_grid(rng, h, w, c, 0.02, 0.98),
        corner_heat: Some(random_grid(rng, h, w, c, 0.02, 0.98)),
        reg,
    }
}

fn shifted(g: &Grid2D, i: usize, d: f64) -> Grid2D {
    let mut g = g.clone();
    g.data[i] += d;
    g
}

/// Flat view over all prediction maps, in a fixed order.
fn flatten(p: &PredictionMaps) -> Vec<f64> {
    let mut v = p.center_heat.data.clone();
    if let Some(c) = &p.corner_heat {
        v.extend_from_slice(&c.data);
    }
    for g in [&p.reg.offset, &p.reg.z, &p.reg.size, &p.reg.direction] {
        v.extend_from_slice(&g.data);
    }
    v
}

fn shifted_maps(p: &PredictionMaps, mut i: usize, d: f64) -> PredictionMaps {
    let mut p = p.clone();
    let mut grids: Vec<&mut Grid2D> = vec![&mut p.center_heat];
    if let Some(c) = p.corner_heat.as_mut() {
        grids.push(c);
    }
    grids.extend([&mut p.reg.offset, &mut p.reg.z, &mut p.reg.size, &mut p.reg.direction]);
    for g in grids {
        if i < g.data.len() {
            g.data[i] += d;
            break;
        }
        i -= g.data.len();
    }
    p
}

fn weighted_sum(a: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(w).map(|(x, y)| x * y).sum()
}

fn check_losses(rng: &mut ChaCha8Rng, instances: usize, per: usize, out: &mut Vec<OpResult>) -> Result<()> {
    let grid = small_grid();
    let cfg = LossConfig::default();
    let mut focal_c = Probe::new("focal_center");
    let mut focal_k = Probe::new("focal_corner");
    let mut off = Probe::new("l1_offset");
    let mut dir = Probe::new("l1_direction");
    let mut z = Probe::new("balanced_l1_z");
    let mut size = Probe::new("balanced_l1_size");
    let mut size_l1 = Probe::new("l1_size");
    let mut dec = Probe::new("decode");
    let mut total = Probe::new("total");
    for _ in 0..instances {
        let t = random_targets(rng, &grid);
        let p = predictions_near(rng, &t);
        let n = t.positives.len();
        let pos = &t.positives;

        let (_, g) = focal_heatmap_loss(&p.center_heat, &t.center_heat, cfg.alpha, cfg.beta, n)?;
        let f = |i, d| focal_heatmap_loss(&shifted(&p.center_heat, i, d), &t.center_heat, cfg.alpha, cfg.beta, n).unwrap().0;
        // Half the probes land on the Gaussian support.
        let mut coords = pick(rng, g.data.len(), per / 2);
        let support: Vec<usize> = (0..t.center_heat.data.len()).filter(|&i| t.center_heat.data[i] > 0.0).collect();
        coords.extend((0..per - per / 2).map(|_| support[rng.gen_range(0..support.len())]));
        focal_c.check(f, &g.data, &coords);

        let corner = p.corner_heat.as_ref().expect("corner map");
        let (_, g) = focal_heatmap_loss(corner, &t.corner_heat, cfg.alpha, cfg.beta, n)?;
        let f = |i, d| focal_heatmap_loss(&shifted(corner, i, d), &t.corner_heat, cfg.alpha, cfg.beta, n).unwrap().0;
        focal_k.check(f, &g.data, &pick(rng, g.data.len(), per));

        // Masked terms only respond at positive cells.
        let pos_coords = |rng: &mut ChaCha8Rng, g: &Grid2D| -> Vec<usize> {
            (0..per)
                .map(|_| {
                    let q = &pos[rng.gen_range(0..pos.len())];
                    g.index(q.row, q.col, rng.gen_range(0..g.channels))
                })
                .collect()
        };
        for (probe, pg, tg, balanced) in [
            (&mut off, &p.reg.offset, &t.offset, false),
            (&mut dir, &p.reg.direction, &t.direction, false),
            (&mut z, &p.reg.z, &t.z, true),
            (&mut size, &p.reg.size, &t.size, true),
            (&mut size_l1, &p.reg.size, &t.size, false),
        ] {
            let eval = |g: &Grid2D| -> (f64, Grid2D) {
                if balanced {
                    masked_balanced_loss(g, tg, pos, n, &cfg).unwrap()
                } else {
                    masked_l1_loss(g, tg, pos, n).unwrap()
                }
            };
            let (_, g) = eval(pg);
            let coords = pos_coords(rng, pg);
            probe.check(|i, d| eval(&shifted(pg, i, d)).0, &g.data, &coords);
        }

        let (_, g) = decode_loss(&p.reg, pos, &t.gt_corners, &grid, n, &cfg)?;
        let flat_g: Vec<f64> = [&g.offset, &g.z, &g.size, &g.direction].iter().flat_map(|m| m.data.clone()).collect();
        let reg_only = PredictionMaps {
            center_heat: Grid2D::zeros(0, 0, 0),
            corner_heat: None,
            reg: p.reg.clone(),
        };
        let f = |i, d| {
            let s = shifted_maps(&reg_only, i, d);
            decode_loss(&s.reg, pos, &t.gt_corners, &grid, n, &cfg).unwrap().0
        };
        let mut coords = Vec::new();
        for _ in 0..per {
            let q = &pos[rng.gen_range(0..pos.len())];
            let k = rng.gen_range(0..8);
            let (map, ch, base) = match k {
                0 | 1 => (&g.offset, k, 0),
                2 => (&g.z, 0, g.offset.data.len()),
                3..=5 => (&g.size, k - 3, g.offset.data.len() + g.z.data.len()),
                _ => (&g.direction, k - 6, g.offset.data.len() + g.z.data.len() + g.size.data.len()),
            };
            coords.push(base + map.index(q.row, q.col, ch));
        }
        dec.check(f, &flat_g, &coords);

        let report = compute_losses(&p, &t, &grid, &cfg)?;
        let flat_g = flatten(&report.grads);
        let f = |i, d| compute_losses(&shifted_maps(&p, i, d), &t, &grid, &cfg).unwrap().total;
        total.check(f, &flat_g, &pick(rng, flat_g.len(), per));
    }
    out.extend([focal_c, focal_k, off, dir, z, size, size_l1, dec, total].map(|p| p.result));
    Ok(())
}

fn check_layers(rng: &mut ChaCha8Rng, instances: usize, per: usize, out: &mut Vec<OpResult>) -> Result<()> {
    let mut conv_x = Probe::new("conv2d_input");
    let mut conv_k = Probe::new("conv2d_kernel");
    let mut conv_b = Probe::new("conv2d_bias");
    let mut acts = [
        (Activation::LeakyRelu, Probe::new("leaky_relu")),
        (Activation::Logistic, Probe::new("logistic")),
        (Activation::Tanh, Probe::new("tanh")),
    ];
    let mut heads = [
        (HeadVariant::Split, Probe::new("head_split")),
        (HeadVariant::Merge, Probe::new("head_merge")),
    ];
    let mut det_probe = Probe::new("backbone_and_head");
    for inst in 0..instances {
        let (h, w) = (rng.gen_range(3..8), rng.gen_range(3..8));
        let (cin, cout) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let k = if rng.gen_bool(0.7) { 3 } else { 1 };
        let stride = rng.gen_range(1..=2);
        let pad = k / 2;
        let x = random_grid(rng, h, w, cin, -1.0, 1.0);
        let kern = Tensor::from_vec(&[k, k, cin, cout], (0..k * k * cin * cout).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let bias = Tensor::from_vec(&[cout], (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let y = conv2d(&x, &kern, Some(&bias), stride, pad)?;
        let wts: Vec<f64> = (0..y.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wg = Grid2D::from_vec(y.height, y.width, y.channels, wts.clone())?;
        let g = conv2d_backward(&x, &kern, &wg, stride, pad)?;
        let loss = |x: &Grid2D, kk: &Tensor, b: &Tensor| weighted_sum(&conv2d(x, kk, Some(b), stride, pad).unwrap().data, &wts);
        conv_x.check(|i, d| loss(&shifted(&x, i, d), &kern, &bias), &g.input.data, &pick(rng, x.data.len(), per));
        let shift_t = |t: &Tensor, i: usize, d: f64| {
            let mut t = t.clone();
            t.data[i] += d;
            t
        };
        conv_k.check(|i, d| loss(&x, &shift_t(&kern, i, d), &bias), &g.kernel.data, &pick(rng, kern.len(), per));
        conv_b.check(|i, d| loss(&x, &kern, &shift_t(&bias, i, d)), &g.bias.data, &pick(rng, bias.len(), per));

        for (kind, probe) in acts.iter_mut() {
            // Inputs kept away from the leaky ReLU kink.
            let mut a = random_grid(rng, 4, 4, 2, -3.0, 3.0);
            a.data.iter_mut().for_each(|v| {
                if v.abs() < 0.01 {
                    *v += 0.02;
                }
            });
            let y = activate(&a, *kind);
            let wts: Vec<f64> = (0..y.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let wg = Grid2D::from_vec(4, 4, 2, wts.clone())?;
            let g = activation_backward(&a, &y, &wg, *kind)?;
            probe.check(|i, d| weighted_sum(&activate(&shifted(&a, i, d), *kind).data, &wts), &g.data, &pick(rng, a.data.len(), per));
        }

        for (variant, probe) in heads.iter_mut() {
            let mut spec = HeadSpec::new(*variant, 3, 2);
            spec.hidden = 4;
            let mut params = ParamStore::default();
            let head = build_head(&spec, &mut params, rng)?;
            let x = random_grid(rng, 4, 5, 3, -1.0, 1.0);
            let (maps, cache) = head.forward(&params, &x)?;
            let wmaps = weights_like(rng, &maps);
            let wflat = flatten(&wmaps);
            let mut grads = params.zeros_like();
            let gx = head.backward(&params, &x, &cache, &wmaps, &mut grads)?;
            let eval = |p: &ParamStore, x: &Grid2D| weighted_sum(&flatten(&head.forward(p, x).unwrap().0), &wflat);
            // Alternate between the input and the parameters.
            if inst % 2 == 0 {
                probe.check(|i, d| eval(&params, &shifted(&x, i, d)), &gx.data, &pick(rng, x.data.len(), per));
            } else {
                let (flat_g, locate) = flat_params(&grads);
                let f = |i: usize, d: f64| {
                    let mut p = params.clone();
                    let (t, j) = locate(i);
                    p.tensors[t].data[j] += d;
                    eval(&p, &x)
                };
                probe.check(f, &flat_g, &pick(rng, flat_g.len(), per));
            }
        }

        let bb = BackboneSpec {
            in_channels: 2,
            blocks: vec![(3, 2), (3, 1)],
        };
        let mut hs = HeadSpec::new(if inst % 2 == 0 { HeadVariant::Split } else { HeadVariant::Merge }, 0, 1);
        hs.hidden = 3;
        let det = Detector::new(&bb, &hs, rng.gen())?;
        let x = random_grid(rng, 6, 6, 2, -1.0, 1.0);
        let (maps, cache) = det.forward(&x)?;
        let wmaps = weights_like(rng, &maps);
        let wflat = flatten(&wmaps);
        let mut grads = det.params.zeros_like();
        det.backward(&x, &cache, &wmaps, &mut grads)?;
        let (flat_g, locate) = flat_params(&grads);
        let f = |i: usize, d: f64| {
            let mut dd = det.clone();
            let (t, j) = locate(i);
            dd.params.tensors[t].data[j] += d;
            weighted_sum(&flatten(&dd.predict(&x).unwrap()), &wflat)
        };
        det_probe.check(f, &flat_g, &pick(rng, flat_g.len(), per));
    }
    out.extend([conv_x, conv_k, conv_b].map(|p| p.result));
    out.extend(acts.into_iter().map(|(_, p)| p.result));
    out.extend(heads.into_iter().map(|(_, p)| p.result));
    out.push(det_probe.result);
    Ok(())
}

fn weights_like(rng: &mut ChaCha8Rng, maps: &PredictionMaps) -> PredictionMaps {
    let mut w = maps.clone();
    let mut fill = |g: &mut Grid2D| g.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    fill(&mut w.center_heat);
    if let Some(c) = w.corner_heat.as_mut() {
        fill(c);
    }
    fill(&mut w.reg.offset);
    fill(&mut w.reg.z);
    fill(&mut w.reg.size);
    fill(&mut w.reg.direction);
    w
}

/// Concatenated parameter gradients and a map from flat index to
/// `(tensor, element)`.
fn flat_params(grads: &[Tensor]) -> (Vec<f64>, impl Fn(usize) -> (usize, usize)) {
    let flat: Vec<f64> = grads.iter().flat_map(|t| t.data.iter().copied()).collect();
    let sizes: Vec<usize> = grads.iter().map(Tensor::len).collect();
    let locate = move |mut i: usize| {
        for (t, &n) in sizes.iter().enumerate() {
            if i < n {
                return (t, i);
            }
            i -= n;
        }
        panic!("flat parameter index out of range");
    };
    (flat, locate)
}

/// Runs every check with `instances` random instances and `per_instance`
/// probes each.
pub fn run_gradcheck(seed: u64, instances: usize, per_instance: usize, tolerance: f64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ops = Vec::new();
    check_losses(&mut rng, instances, per_instance, &mut ops)?;
    check_layers(&mut rng, instances, per_instance, &mut ops)?;
    Ok(GradcheckReport { ops, tolerance })
}
