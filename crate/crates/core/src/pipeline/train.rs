use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::dataset::{network_input, synth_frames, Frame, Split};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate, EvalConfig, EvalFrame, EvalReport};
use crate::infer::detect;
use crate::losses::{compute_losses, LossTerms};
use crate::nn::{adamw_step, one_cycle, Detector, OptimState, Tensor};
use crate::pointcloud::{augment_global, GlobalAug, LabeledScene};
use crate::targets::{encode_targets, TargetSet};

/// IoU threshold of the held-out check run at the end of training.
pub const TOY_EVAL_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub momentum: f64,
    pub total: f64,
    pub terms: LossTerms,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub detector: Detector,
    pub curve: Vec<StepRecord>,
    /// Mean total loss over the (unaugmented) training scenes before the
    /// first step and after the last.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub val_report: EvalReport,
}

impl TrainResult {
    /// AP40 in BEV for class 0 on the held-out split.
    pub fn val_ap_bev(&self) -> f64 {
        self.val_report.classes.first().and_then(|c| c.ap_bev).unwrap_or(0.0)
    }
}

/// Tab-separated loss curve with a header row.
pub fn format_curve(curve: &[StepRecord]) -> String {
    let mut s = String::from("step\tlr\tmomentum\ttotal\tcls\toff\tz\tsize\tdir\tcor\tdecode\n");
    for r in curve {
        let _ = write!(s, "{}\t{:e}\t{:.6}\t{:.9e}", r.step, r.lr, r.momentum, r.total);
        for (_, v) in r.terms.named() {
            let _ = write!(s, "\t{:.9e}", v.unwrap_or(f64::NAN));
        }
        s.push('\n');
    }
    s
}

/// Network input and targets for one scene; boxes whose centers leave the
/// grid are dropped.
pub fn prepare(scene: &LabeledScene, cfg: &RunConfig) -> Result<(crate::geom::Grid2D, TargetSet)> {
    let mut boxes = Vec::new();
    let mut classes = Vec::new();
    for (b, &c) in scene.boxes.iter().zip(&scene.classes) {
        if cfg.grid.contains_xy(b.cx, b.cy) {
            boxes.push(*b);
            classes.push(c);
        }
    }
    let input = network_input(&scene.cloud, cfg)?;
    let targets = encode_targets(&boxes, &classes, &cfg.encoder())?;
    Ok((input, targets))
}

fn random_aug(rng: &mut ChaCha8Rng, cfg: &RunConfig) -> GlobalAug {
    let flip = cfg.aug_flip && rng.gen_bool(0.5);
    let rotation = if cfg.aug_rotation > 0.0 {
        rng.gen_range(-cfg.aug_rotation..cfg.aug_rotation)
    } else {
        0.0
    };
    let scale = if cfg.aug_scale > 0.0 {
        rng.gen_range(1.0 - cfg.aug_scale..1.0 + cfg.aug_scale)
    } else {
        1.0
    };
    GlobalAug { flip, rotation, scale }
}

/// Mean total loss of `detector` over prepared samples.
pub fn mean_loss(detector: &Detector, samples: &[(crate::geom::Grid2D, TargetSet)], cfg: &RunConfig) -> Result<f64> {
    let loss_cfg = cfg.loss_config();
    let mut sum = 0.0;
    for (input, targets) in samples {
        let pred = detector.predict(input)?;
        sum += compute_losses(&pred, targets, &cfg.grid, &loss_cfg)?.total;
    }
    Ok(sum / samples.len().max(1) as f64)
}

/// Detections of `detector` on each frame, paired with the labels.
pub fn eval_frames(detector: &Detector, frames: &[Frame], cfg: &RunConfig) -> Result<Vec<EvalFrame>> {
    frames
        .iter()
        .map(|f| {
            let pred = detector.predict(&network_input(&f.scene.cloud, cfg)?)?;
            Ok(EvalFrame {
                detections: detect(&pred, &cfg.grid, &cfg.infer)?.detections,
                boxes: f.scene.boxes.clone(),
                classes: f.scene.classes.clone(),
            })
        })
        .collect()
}

/// Trains a fresh detector on synthesized scenes and evaluates it on a
/// held-out split. `log` receives one `key=value` line per logged step.
pub fn train_toy(cfg: &RunConfig, log: &mut dyn FnMut(&str)) -> Result<TrainResult> {
    cfg.validate()?;
    let train = synth_frames(cfg, Split::Train, cfg.train_scenes)?;
    let val = synth_frames(cfg, Split::Val, cfg.val_scenes)?;
    let mut detector = Detector::new(&cfg.backbone_spec(), &cfg.head_spec(), cfg.seed)?;
    let loss_cfg = cfg.loss_config();
    let schedule = cfg.schedule();

    let clean: Vec<_> = train.iter().map(|f| prepare(&f.scene, cfg)).collect::<Result<_>>()?;
    let initial_loss = mean_loss(&detector, &clean, cfg)?;
    log(&format!("event=start initial_loss={initial_loss:.6} params={}", detector.params.num_values()));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_7A1A);
    let mut order: Vec<usize> = Vec::new();
    let mut state = OptimState::new(&detector.params.tensors);
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (lr, momentum) = one_cycle(step, &schedule)?;
        let mut grads: Vec<Tensor> = detector.params.zeros_like();
        let mut total = 0.0;
        let mut terms = [0.0f64; 7];
        for _ in 0..cfg.batch {
            if order.is_empty() {
                order = (0..train.len()).collect();
                order.shuffle(&mut rng);
            }
            let idx = order.pop().expect("non-empty training set");
            let aug = random_aug(&mut rng, cfg);
            let scene = augment_global(&train[idx].scene, &aug);
            let (input, targets) = prepare(&scene, cfg)?;
            let (pred, cache) = detector.forward(&input)?;
            let report = compute_losses(&pred, &targets, &cfg.grid, &loss_cfg)?;
            if !report.total.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            detector.backward(&input, &cache, &report.grads, &mut grads)?;
            total += report.total;
            for (t, (_, v)) in terms.iter_mut().zip(report.terms.named()) {
                *t += v.unwrap_or(0.0);
            }
        }
        let inv = 1.0 / cfg.batch as f64;
        for g in &mut grads {
            g.data.iter_mut().for_each(|v| *v *= inv);
        }
        if grads.iter().any(|g| g.data.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteLoss { step });
        }
        adamw_step(&mut detector.params.tensors, &grads, &mut state, lr, momentum, &cfg.optim)?;
        let m = |i: usize| Some(terms[i] * inv);
        let rec = StepRecord {
            step,
            lr,
            momentum,
            total: total * inv,
            terms: LossTerms {
                cls: m(0),
                off: m(1),
                z: m(2),
                size: m(3),
                dir: m(4),
                cor: m(5),
                decode: m(6),
            },
        };
        if cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
            log(&format!("step={step} lr={lr:.3e} momentum={momentum:.4} loss={:.6}", rec.total));
        }
        curve.push(rec);
    }

    let final_loss = mean_loss(&detector, &clean, cfg)?;
    let eval_cfg = match cfg.eval_iou {
        Some(t) => EvalConfig::uniform(cfg.num_classes(), t),
        None => EvalConfig::uniform(cfg.num_classes(), TOY_EVAL_IOU),
    };
    let val_report = evaluate(&eval_frames(&detector, &val, cfg)?, &cfg.class_names(), &eval_cfg)?;
    log(&format!(
        "event=done initial_loss={initial_loss:.6} final_loss={final_loss:.6} ratio={:.4}",
        final_loss / initial_loss
    ));
    Ok(TrainResult {
        detector,
        curve,
        initial_loss,
        final_loss,
        val_report,
    })
}
