use std::f64::consts::FRAC_PI_4;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evalkit::EvalConfig;
use crate::infer::InferConfig;
use crate::kv::{parse_bool, parse_f64, parse_kv, parse_pair, parse_u64, parse_usize};
use crate::losses::{LossConfig, SizeLoss};
use crate::nn::{AdamWConfig, BackboneSpec, HeadSpec, HeadVariant, ScheduleConfig};
use crate::pointcloud::SceneSpec;
use crate::targets::EncoderConfig;
use crate::voxelize::{GridConfig, BEV_CHANNELS};

/// Everything a command needs, read from one flat key-value file and
/// `--key value` overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Dataset directory with `velodyne/` and `labels/`; scenes are
    /// synthesized from `seed` when absent.
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// nuScenes-style error sidecar for an NDS line.
    pub mtp: Option<PathBuf>,

    pub grid: GridConfig,
    pub scene: SceneSpec,
    pub min_overlap: f64,
    pub loss: LossConfig,
    pub infer: InferConfig,
    pub eval_iou: Option<f64>,

    pub head: HeadVariant,
    pub hidden: usize,
    pub backbone: Vec<(usize, usize)>,
    pub corner: bool,
    pub decode: bool,

    pub train_scenes: usize,
    pub val_scenes: usize,
    /// Scenes produced by `synth` and by on-the-fly `infer`/`encode`.
    pub scenes: usize,
    pub steps: usize,
    pub batch: usize,
    pub schedule: ScheduleConfig,
    pub optim: AdamWConfig,
    pub aug_flip: bool,
    pub aug_rotation: f64,
    pub aug_scale: f64,
    pub log_every: usize,
    pub oracle_head: bool,
}

impl Default for RunConfig {
    /// Desk-scale toy setup: a 25.6 m square in front of the sensor with
    /// 0.2 m voxels and one class.
    fn default() -> Self {
        let grid = GridConfig {
            x_range: (0.0, 25.6),
            y_range: (-12.8, 12.8),
            z_range: (-3.0, 1.0),
            vx: 0.2,
            vy: 0.2,
            vz: 0.2,
            downsample: 4,
            max_points_per_voxel: 5,
        };
        let scene = SceneSpec {
            box_count: (2, 5),
            x_range: grid.x_range,
            y_range: grid.y_range,
            yaw_range: (-FRAC_PI_4, FRAC_PI_4),
            ..SceneSpec::default()
        };
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            data: None,
            checkpoint: None,
            detections: None,
            labels: None,
            mtp: None,
            grid,
            scene,
            min_overlap: 0.01,
            loss: LossConfig::default(),
            infer: InferConfig::default(),
            eval_iou: None,
            head: HeadVariant::Split,
            hidden: 32,
            backbone: vec![(16, 2), (32, 2), (32, 1)],
            corner: true,
            decode: true,
            train_scenes: 64,
            val_scenes: 24,
            scenes: 8,
            steps: 300,
            batch: 4,
            schedule: ScheduleConfig::default(),
            optim: AdamWConfig::default(),
            aug_flip: true,
            aug_rotation: 0.0,
            aug_scale: 0.0,
            log_every: 10,
            oracle_head: false,
        }
    }
}

fn parse_backbone(key: &str, value: &str) -> Result<Vec<(usize, usize)>> {
    value
        .split(',')
        .map(|block| {
            let (c, s) = block
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("{key}: expected `channels:stride,...`")))?;
            Ok((parse_usize(key, c)?, parse_usize(key, s)?))
        })
        .collect()
}

impl RunConfig {
    /// Applies one setting. Keys starting with `scene.` go to the scene
    /// generator.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(k) = key.strip_prefix("scene.") {
            return self.scene.set(k, value);
        }
        let path = || Some(PathBuf::from(value));
        match key {
            "seed" => self.seed = parse_u64(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "data" => self.data = path(),
            "checkpoint" => self.checkpoint = path(),
            "detections" => self.detections = path(),
            "labels" => self.labels = path(),
            "mtp" => self.mtp = path(),

            "x_range" => self.grid.x_range = parse_pair(key, value)?,
            "y_range" => self.grid.y_range = parse_pair(key, value)?,
            "z_range" => self.grid.z_range = parse_pair(key, value)?,
            "vx" => self.grid.vx = parse_f64(key, value)?,
            "vy" => self.grid.vy = parse_f64(key, value)?,
            "vz" => self.grid.vz = parse_f64(key, value)?,
            "downsample" => self.grid.downsample = parse_usize(key, value)?,
            "max_points_per_voxel" => self.grid.max_points_per_voxel = parse_usize(key, value)?,
            "min_overlap" => self.min_overlap = parse_f64(key, value)?,

            "alpha" => self.loss.alpha = parse_f64(key, value)?,
            "beta" => self.loss.beta = parse_f64(key, value)?,
            "a" => self.loss.a = parse_f64(key, value)?,
            "gamma" => self.loss.gamma = parse_f64(key, value)?,
            "w_cls" => self.loss.w_cls = parse_f64(key, value)?,
            "w_off" => self.loss.w_off = parse_f64(key, value)?,
            "w_z" => self.loss.w_z = parse_f64(key, value)?,
            "w_size" => self.loss.w_size = parse_f64(key, value)?,
            "w_dir" => self.loss.w_dir = parse_f64(key, value)?,
            "w_cor" => self.loss.w_cor = parse_f64(key, value)?,
            "w_decode" => self.loss.w_decode = parse_f64(key, value)?,
            "decode_corner_mean" => self.loss.decode_corner_mean = parse_bool(key, value)?,
            "size_loss" => {
                self.loss.size_loss = match value {
                    "balanced" => SizeLoss::Balanced,
                    "l1" => SizeLoss::L1,
                    _ => return Err(Error::Config(format!("size_loss: `{value}` (balanced | l1)"))),
                }
            }

            "threshold" => self.infer.threshold = parse_f64(key, value)?,
            "max_detections" => self.infer.max_detections = parse_usize(key, value)?,
            "kswarp" => self.infer.kswarp = parse_bool(key, value)?,
            "eval_iou" => self.eval_iou = Some(parse_f64(key, value)?),

            "head" => self.head = value.parse()?,
            "hidden" => self.hidden = parse_usize(key, value)?,
            "backbone" => self.backbone = parse_backbone(key, value)?,
            "corner" => self.corner = parse_bool(key, value)?,
            "decode" => self.decode = parse_bool(key, value)?,

            "train_scenes" => self.train_scenes = parse_usize(key, value)?,
            "val_scenes" => self.val_scenes = parse_usize(key, value)?,
            "scenes" => self.scenes = parse_usize(key, value)?,
            "steps" => self.steps = parse_usize(key, value)?,
            "batch" => self.batch = parse_usize(key, value)?,
            "max_lr" => self.schedule.max_lr = parse_f64(key, value)?,
            "div_factor" => self.schedule.div_factor = parse_f64(key, value)?,
            "final_div_factor" => self.schedule.final_div_factor = parse_f64(key, value)?,
            "warm_fraction" => self.schedule.warm_fraction = parse_f64(key, value)?,
            "momentum_max" => self.schedule.momentum_max = parse_f64(key, value)?,
            "momentum_min" => self.schedule.momentum_min = parse_f64(key, value)?,
            "weight_decay" => self.optim.weight_decay = parse_f64(key, value)?,
            "beta2" => self.optim.beta2 = parse_f64(key, value)?,
            "eps" => self.optim.eps = parse_f64(key, value)?,
            "aug_flip" => self.aug_flip = parse_bool(key, value)?,
            "aug_rotation" => self.aug_rotation = parse_f64(key, value)?,
            "aug_scale" => self.aug_scale = parse_f64(key, value)?,
            "log_every" => self.log_every = parse_usize(key, value)?,
            "oracle_head" => self.oracle_head = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Defaults, then the file at `path` (if any), then `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| Error::file(p, e))?;
            cfg.apply_text(&text)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (line, key, value) in parse_kv(text)? {
            self.set(&key, &value).map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.scene.validate()?;
        self.loss.validate()?;
        self.infer.validate()?;
        self.encoder().validate()?;
        self.backbone_spec().validate()?;
        self.head_spec().validate()?;
        let mut sched = self.schedule;
        sched.total_steps = self.steps.max(1);
        sched.validate()?;
        if self.batch == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        let s = self.backbone_spec().stride();
        if self.grid.downsample % s != 0 {
            return Err(Error::Config(format!(
                "backbone stride {s} must divide downsample {}",
                self.grid.downsample
            )));
        }
        if let Some(t) = self.eval_iou {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config("eval_iou must lie in (0, 1]".into()));
            }
        }
        if !(self.aug_scale >= 0.0 && self.aug_scale < 1.0 && self.aug_rotation >= 0.0) {
            return Err(Error::Config("aug_scale must lie in [0, 1) and aug_rotation be >= 0".into()));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.scene.class_names()
    }

    pub fn num_classes(&self) -> usize {
        self.scene.classes.len()
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            min_overlap: self.min_overlap,
            ..EncoderConfig::new(self.grid.clone(), self.num_classes())
        }
    }

    /// Loss settings with the decode toggle folded in.
    pub fn loss_config(&self) -> LossConfig {
        let mut l = self.loss.clone();
        if !self.decode {
            l.w_decode = 0.0;
        }
        l
    }

    pub fn eval_config(&self) -> EvalConfig {
        match self.eval_iou {
            Some(t) => EvalConfig::uniform(self.num_classes(), t),
            None => EvalConfig::for_classes(&self.class_names()),
        }
    }

    pub fn backbone_spec(&self) -> BackboneSpec {
        BackboneSpec {
            in_channels: BEV_CHANNELS,
            blocks: self.backbone.clone(),
        }
    }

    /// Input plane stride in voxels, so that the backbone lands on the
    /// feature-map resolution.
    pub fn input_stride(&self) -> usize {
        (self.grid.downsample / self.backbone_spec().stride()).max(1)
    }

    /// Head with biases starting at the mean class size and box height.
    pub fn head_spec(&self) -> HeadSpec {
        let mut h = HeadSpec::new(self.head, self.backbone_spec().out_channels(), self.num_classes());
        h.hidden = self.hidden;
        h.corner = self.corner;
        let n = self.scene.classes.len().max(1) as f64;
        let mid = |r: (f64, f64)| (r.0 + r.1) / 2.0;
        let mut size = [0.0; 3];
        for c in &self.scene.classes {
            size[0] += mid(c.length) / n;
            size[1] += mid(c.width) / n;
            size[2] += mid(c.height) / n;
        }
        h.size_prior = size;
        h.z_prior = self.scene.ground_z + size[2] / 2.0;
        h
    }

    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            total_steps: self.steps.max(1),
            ..self.schedule
        }
    }

    /// `key=value` dump of the settings that shape a run.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let g = &self.grid;
        let _ = write!(
            s,
            "seed={} head={:?} hidden={} corner={} kswarp={} decode={} size_loss={:?} steps={} batch={} train_scenes={} val_scenes={} max_lr={} grid={}x{} downsample={}",
            self.seed,
            self.head,
            self.hidden,
            self.corner,
            self.infer.kswarp,
            self.decode,
            self.loss.size_loss,
            self.steps,
            self.batch,
            self.train_scenes,
            self.val_scenes,
            self.schedule.max_lr,
            g.feature_shape().0,
            g.feature_shape().1,
            g.downsample
        );
        s
    }
}
