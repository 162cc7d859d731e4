use std::fs;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::dataset::{list_ids, load_frames, network_input, read_labels_file, write_dataset, Split};
use super::gradcheck::{run_gradcheck, GradcheckReport};
use super::train::{format_curve, prepare, train_toy, TrainResult};
use crate::dump::write_grid;
use crate::error::{Error, Result};
use crate::evalkit::{evaluate, nds, parse_mtp_sidecar, EvalFrame, EvalReport};
use crate::infer::{detect, format_detections, parse_detections, Detection};
use crate::maps::PredictionMaps;
use crate::nn::{load_checkpoint, save_checkpoint, Detector};
use crate::pointcloud::format_labels;

pub type Log<'a> = &'a mut dyn FnMut(&str);

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::file(path, e))
}

/// Writes `cfg.scenes` synthetic scenes as a dataset under `cfg.out`.
pub fn cmd_synth(cfg: &RunConfig, log: Log) -> Result<()> {
    let frames = super::dataset::synth_frames(cfg, Split::Train, cfg.scenes)?;
    write_dataset(&cfg.out, &frames, &cfg.class_names())?;
    let boxes: usize = frames.iter().map(|f| f.scene.boxes.len()).sum();
    log(&format!("event=synth frames={} boxes={boxes} out={}", frames.len(), cfg.out.display()));
    Ok(())
}

/// Encodes targets for every frame into `out/targets/<id>/`, next to the
/// network input plane `input.grid`.
pub fn cmd_encode(cfg: &RunConfig, log: Log) -> Result<()> {
    let frames = load_frames(cfg, Split::Train, cfg.scenes)?;
    for f in &frames {
        let (input, targets) = prepare(&f.scene, cfg)?;
        let dir = cfg.out.join("targets").join(&f.id);
        targets.write_to_dir(&dir)?;
        let p = dir.join("input.grid");
        let file = fs::File::create(&p).map_err(|e| Error::file(&p, e))?;
        write_grid(&input, std::io::BufWriter::new(file))?;
        log(&format!(
            "event=encode frame={} positives={} collisions={}",
            f.id,
            targets.positives.len(),
            targets.collisions
        ));
    }
    Ok(())
}

/// Trains, then writes `checkpoint/`, `loss_curve.tsv` and `val_eval.txt`.
pub fn cmd_train_toy(cfg: &RunConfig, log: Log) -> Result<TrainResult> {
    log(&cfg.summary());
    let result = train_toy(cfg, log)?;
    save_checkpoint(&result.detector.params, &cfg.out.join("checkpoint"))?;
    write(&cfg.out.join("loss_curve.tsv"), format_curve(&result.curve))?;
    write(&cfg.out.join("val_eval.txt"), result.val_report.to_table())?;
    log(&format!(
        "event=train_done initial_loss={:.6} final_loss={:.6} val_ap40_bev={:.4}",
        result.initial_loss,
        result.final_loss,
        result.val_ap_bev()
    ));
    Ok(result)
}

/// Builds the detector described by `cfg` and loads `cfg.checkpoint` into it.
pub fn load_detector(cfg: &RunConfig) -> Result<Detector> {
    let dir = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("infer needs `checkpoint` (or `oracle_head`)".into()))?;
    let mut det = Detector::new(&cfg.backbone_spec(), &cfg.head_spec(), cfg.seed)?;
    det.params.load_from(&load_checkpoint(dir)?)?;
    Ok(det)
}

/// Predictions for a scene: the model's, or the encoded targets when
/// `oracle_head` is set.
pub fn predict_frame(cfg: &RunConfig, det: Option<&Detector>, scene: &crate::pointcloud::LabeledScene) -> Result<PredictionMaps> {
    match det {
        Some(d) => d.predict(&network_input(&scene.cloud, cfg)?),
        None => {
            let (_, t) = prepare(scene, cfg)?;
            let mut p = PredictionMaps::from_targets(&t);
            if !cfg.corner {
                p.corner_heat = None;
            }
            Ok(p)
        }
    }
}

/// Writes `out/detections/<id>.txt` per frame. Synthesized frames also get
/// `out/labels/<id>.txt`.
pub fn cmd_infer(cfg: &RunConfig, log: Log) -> Result<Vec<(String, Vec<Detection>)>> {
    let det = if cfg.oracle_head { None } else { Some(load_detector(cfg)?) };
    let frames = load_frames(cfg, Split::Train, cfg.scenes)?;
    let names = cfg.class_names();
    let mut all = Vec::with_capacity(frames.len());
    for f in &frames {
        let pred = predict_frame(cfg, det.as_ref(), &f.scene)?;
        let out = detect(&pred, &cfg.grid, &cfg.infer)?;
        write(&cfg.out.join("detections").join(format!("{}.txt", f.id)), format_detections(&out.detections, &names))?;
        if cfg.data.is_none() {
            write(
                &cfg.out.join("labels").join(format!("{}.txt", f.id)),
                format_labels(&f.scene.boxes, &f.scene.classes, &names),
            )?;
        }
        log(&format!(
            "event=infer frame={} detections={} dropped={}",
            f.id,
            out.detections.len(),
            out.dropped
        ));
        all.push((f.id.clone(), out.detections));
    }
    Ok(all)
}

fn labels_dir(cfg: &RunConfig) -> PathBuf {
    match (&cfg.labels, &cfg.data) {
        (Some(l), _) => l.clone(),
        (None, Some(d)) => d.join("labels"),
        (None, None) => cfg.out.join("labels"),
    }
}

/// A sidecar mAP above 1 is a percentage.
fn map_fraction(map: f64) -> f64 {
    if map > 1.0 {
        map / 100.0
    } else {
        map
    }
}

/// Reads paired detection and label files and evaluates them.
pub fn cmd_eval(cfg: &RunConfig, log: Log) -> Result<EvalReport> {
    let det_dir = cfg.detections.clone().unwrap_or_else(|| cfg.out.join("detections"));
    let lab_dir = labels_dir(cfg);
    let det_ids = list_ids(&det_dir, "txt")?;
    let lab_ids = list_ids(&lab_dir, "txt")?;
    if det_ids != lab_ids {
        let only_det: Vec<_> = det_ids.iter().filter(|i| !lab_ids.contains(i)).cloned().collect();
        let only_lab: Vec<_> = lab_ids.iter().filter(|i| !det_ids.contains(i)).cloned().collect();
        return Err(Error::FrameMismatch(format!(
            "without labels: [{}]; without detections: [{}]",
            only_det.join(", "),
            only_lab.join(", ")
        )));
    }
    let names = cfg.class_names();
    let mut frames = Vec::with_capacity(det_ids.len());
    for id in &det_ids {
        let p = det_dir.join(format!("{id}.txt"));
        let text = fs::read_to_string(&p).map_err(|e| Error::file(&p, e))?;
        let detections = parse_detections(&text, &names)?;
        let (boxes, classes) = read_labels_file(&lab_dir.join(format!("{id}.txt")), &names)?;
        frames.push(EvalFrame {
            detections,
            boxes,
            classes,
        });
    }
    let mut report = evaluate(&frames, &names, &cfg.eval_config())?;
    if let Some(sidecar) = &cfg.mtp {
        let text = fs::read_to_string(sidecar).map_err(|e| Error::file(sidecar, e))?;
        let (map, mtp) = parse_mtp_sidecar(&text)?;
        let map = match map {
            Some(m) => map_fraction(m),
            None => {
                let aps: Vec<f64> = report.classes.iter().filter_map(|c| c.ap_3d).collect();
                aps.iter().sum::<f64>() / aps.len().max(1) as f64
            }
        };
        report.nds = Some(nds(map, mtp));
    }
    write(&cfg.out.join("eval.txt"), report.to_table())?;
    for c in &report.classes {
        let f = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.6}"));
        log(&format!(
            "class={} iou={} gt={} det={} ap40_bev={} ap40_3d={}",
            c.class,
            c.threshold,
            c.num_gt,
            c.num_det,
            f(c.ap_bev),
            f(c.ap_3d)
        ));
    }
    if let Some(n) = report.nds {
        log(&format!("nds={n:.6}"));
    }
    Ok(report)
}

/// Probes per random instance in the gradient suite.
pub const GRADCHECK_PER_INSTANCE: usize = 5;
/// Random instances per operation.
pub const GRADCHECK_INSTANCES: usize = 24;
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

pub fn cmd_gradcheck(cfg: &RunConfig, log: Log) -> Result<GradcheckReport> {
    let report = run_gradcheck(cfg.seed, GRADCHECK_INSTANCES, GRADCHECK_PER_INSTANCE, GRADCHECK_TOLERANCE)?;
    for o in &report.ops {
        log(&format!(
            "op={} probes={} worst_rel={:.3e} worst_abs={:.3e} ok={}",
            o.name,
            o.probes,
            o.worst_rel,
            o.worst_abs,
            o.worst_rel < report.tolerance
        ));
    }
    write(&cfg.out.join("gradcheck.txt"), report.to_table())?;
    Ok(report)
}

/// NDS for every sidecar named by `cfg.mtp`: one file, or every `.txt` in a
/// directory. Each sidecar must carry `mAP` (as a fraction or a percentage).
pub fn cmd_nds(cfg: &RunConfig, log: Log) -> Result<Vec<(String, f64)>> {
    let path = cfg
        .mtp
        .as_ref()
        .ok_or_else(|| Error::Config("nds needs `mtp` (a sidecar file or directory)".into()))?;
    let files: Vec<PathBuf> = if path.is_dir() {
        list_ids(path, "txt")?.into_iter().map(|id| path.join(format!("{id}.txt"))).collect()
    } else {
        vec![path.clone()]
    };
    let mut out = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f).map_err(|e| Error::file(&f, e))?;
        let (map, mtp) = parse_mtp_sidecar(&text)?;
        let map = map.ok_or_else(|| Error::Config(format!("{} lacks mAP", f.display())))?;
        let frac = map_fraction(map);
        let v = nds(frac, mtp);
        let name = f.file_stem().and_then(|s| s.to_str()).unwrap_or("?").to_string();
        log(&format!("sidecar={name} map={frac:.4} nds={v:.6} nds_pct={:.2}", v * 100.0));
        out.push((name, v));
    }
    Ok(out)
}
