use std::fs;
use std::path::Path;
use std::process::Command;

use anchorfree3d::infer::{detect, format_detections, Detection};
use anchorfree3d::losses::compute_losses;
use anchorfree3d::nn::{load_checkpoint, Detector, HeadVariant};
use anchorfree3d::pipeline::{
    cmd_eval, cmd_infer, cmd_synth, cmd_train_toy, format_curve, load_frames, predict_frame, prepare,
    read_labels_file, train_toy, RunConfig, Split,
};

fn quiet() -> impl FnMut(&str) {
    |_: &str| {}
}

fn small(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.out = out.to_path_buf();
    cfg.train_scenes = 6;
    cfg.val_scenes = 2;
    cfg.steps = 6;
    cfg.batch = 2;
    cfg.scenes = 4;
    cfg
}

#[test]
fn same_seed_gives_identical_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let a = train_toy(&cfg, &mut quiet()).unwrap();
    let b = train_toy(&cfg, &mut quiet()).unwrap();
    assert_eq!(format_curve(&a.curve), format_curve(&b.curve));
    for (x, y) in a.curve.iter().zip(&b.curve) {
        assert_eq!(x.total.to_bits(), y.total.to_bits());
    }
    assert_eq!(a.detector.params.tensors, b.detector.params.tensors);

    let mut other = cfg.clone();
    other.seed = 1;
    let c = train_toy(&other, &mut quiet()).unwrap();
    assert_ne!(format_curve(&a.curve), format_curve(&c.curve));
}

#[test]
fn zero_steps_saves_initial_weights() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.steps = 0;
    cmd_train_toy(&cfg, &mut quiet()).unwrap();
    let saved = load_checkpoint(&dir.path().join("checkpoint")).unwrap();
    let init = Detector::new(&cfg.backbone_spec(), &cfg.head_spec(), cfg.seed).unwrap();
    assert_eq!(saved.names, init.params.names);
    for (s, i) in saved.tensors.iter().zip(&init.params.tensors) {
        assert_eq!(s.shape, i.shape);
        for (a, b) in s.data.iter().zip(&i.data) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }
}

#[test]
fn empty_scene_gives_empty_detection_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.set("scene.boxes", "0,0").unwrap();
    cfg.oracle_head = true;
    cmd_infer(&cfg, &mut quiet()).unwrap();
    for i in 0..cfg.scenes {
        let p = dir.path().join("detections").join(format!("{}.txt", anchorfree3d::pipeline::frame_id(i)));
        assert_eq!(fs::read_to_string(p).unwrap(), "");
    }
}

#[test]
fn kswarp_off_reports_raw_center_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.infer.kswarp = false;
    for f in load_frames(&cfg, Split::Train, 4).unwrap() {
        let pred = predict_frame(&cfg, None, &f.scene).unwrap();
        let out = detect(&pred, &cfg.grid, &cfg.infer).unwrap();
        assert!(!out.detections.is_empty());
        for d in &out.detections {
            let (fx, fy) = cfg.grid.to_feature(d.bbox.cx, d.bbox.cy);
            let raw = pred.center_heat.get(fx.floor() as usize, fy.floor() as usize, d.class);
            assert_eq!(d.confidence, raw);
        }
    }
}

fn label_detections(cfg: &RunConfig, confidence: f64) {
    let names = cfg.class_names();
    for f in load_frames(cfg, Split::Train, cfg.scenes).unwrap() {
        let dets: Vec<Detection> = f
            .scene
            .boxes
            .iter()
            .zip(&f.scene.classes)
            .map(|(b, c)| Detection { bbox: *b, class: *c, confidence })
            .collect();
        let dets = if confidence > 0.0 { dets } else { Vec::new() };
        let p = cfg.out.join("detections").join(format!("{}.txt", f.id));
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, format_detections(&dets, &names)).unwrap();
    }
}

#[test]
fn labels_as_detections_score_perfect_ap() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cmd_synth(&cfg, &mut quiet()).unwrap();
    cfg.data = Some(dir.path().to_path_buf());
    label_detections(&cfg, 1.0);
    let report = cmd_eval(&cfg, &mut quiet()).unwrap();
    assert_eq!(report.classes[0].ap_bev, Some(1.0));
    assert_eq!(report.classes[0].ap_3d, Some(1.0));

    label_detections(&cfg, 0.0);
    let report = cmd_eval(&cfg, &mut quiet()).unwrap();
    assert_eq!(report.classes[0].ap_bev, Some(0.0));
    assert_eq!(report.classes[0].ap_3d, Some(0.0));
    assert!(fs::read_to_string(dir.path().join("eval.txt")).unwrap().contains("Car"));
}

#[test]
fn dataset_round_trip_keeps_labels() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    let synthesized = load_frames(&cfg, Split::Train, cfg.scenes).unwrap();
    cmd_synth(&cfg, &mut quiet()).unwrap();
    cfg.data = Some(dir.path().to_path_buf());
    let loaded = load_frames(&cfg, Split::Train, cfg.scenes).unwrap();
    assert_eq!(synthesized.len(), loaded.len());
    for (a, b) in synthesized.iter().zip(&loaded) {
        let (boxes, classes) = read_labels_file(&dir.path().join("labels").join(format!("{}.txt", a.id)), &cfg.class_names()).unwrap();
        assert_eq!(boxes, a.scene.boxes);
        assert_eq!(classes, a.scene.classes);
        assert_eq!(b.scene.boxes, a.scene.boxes);
        assert_eq!(b.scene.cloud.len(), a.scene.cloud.len());
    }
}

#[test]
fn split_and_merge_heads_produce_the_same_loss_terms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let frame = &load_frames(&cfg, Split::Train, 1).unwrap()[0];
    let (input, targets) = prepare(&frame.scene, &cfg).unwrap();
    let mut shapes = Vec::new();
    for variant in [HeadVariant::Split, HeadVariant::Merge] {
        let mut c = cfg.clone();
        c.head = variant;
        let det = Detector::new(&c.backbone_spec(), &c.head_spec(), c.seed).unwrap();
        let pred = det.predict(&input).unwrap();
        let report = compute_losses(&pred, &targets, &c.grid, &c.loss_config()).unwrap();
        assert!(report.total.is_finite() && report.total > 0.0);
        let present: Vec<(&str, bool)> = report.terms.named().iter().map(|(n, v)| (*n, v.is_some())).collect();
        shapes.push((
            present,
            pred.center_heat.shape(),
            pred.corner_heat.as_ref().map(|g| g.shape()),
            pred.reg.rows(),
            pred.reg.cols(),
        ));
    }
    assert_eq!(shapes[0], shapes[1]);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_anchorfree3d"))
}

#[test]
fn binary_runs_synth_infer_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let synth = bin().args(["synth", "--out", d, "--scenes", "3", "--seed", "4"]).output().unwrap();
    assert!(synth.status.success());
    let log = String::from_utf8(synth.stdout).unwrap();
    assert!(log.lines().all(|l| l.contains('=')));
    assert!(log.contains("event=synth frames=3"));

    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    let infer = bin().args(["infer", "--data", d, "--out", o, "--oracle-head"]).output().unwrap();
    assert!(infer.status.success(), "{}", String::from_utf8_lossy(&infer.stderr));
    let eval = bin()
        .args(["eval", "--labels", &format!("{d}/labels"), "--out", o])
        .output()
        .unwrap();
    assert!(eval.status.success());
    let log = String::from_utf8(eval.stdout).unwrap();
    assert!(log.contains("ap40_bev=1.000000"), "{log}");
}

#[test]
fn binary_applies_cli_over_file_over_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    fs::write(&cfg_path, "seed 5\nscenes 2\n").unwrap();
    let c = cfg_path.to_str().unwrap();
    let o = dir.path().to_str().unwrap();
    let from_file = bin().args(["synth", "--config", c, "--out", o]).output().unwrap();
    assert!(String::from_utf8(from_file.stdout).unwrap().contains("seed=5"));
    let overridden = bin().args(["synth", "--config", c, "--seed", "6", "--out", o]).output().unwrap();
    let log = String::from_utf8(overridden.stdout).unwrap();
    assert!(log.contains("seed=6") && log.contains("frames=2"), "{log}");
}

#[test]
fn binary_reports_errors_with_nonzero_exit() {
    let unknown = bin().args(["synth", "--no-such-key", "1"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8(unknown.stderr).unwrap().starts_with("error="));

    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let no_ckpt = bin().args(["infer", "--out", o]).output().unwrap();
    assert_eq!(no_ckpt.status.code(), Some(1));
}

#[test]
fn eval_adds_nds_from_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cmd_synth(&cfg, &mut quiet()).unwrap();
    cfg.data = Some(dir.path().to_path_buf());
    label_detections(&cfg, 1.0);
    cfg.mtp = Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/nds/row_1.txt"));
    let report = cmd_eval(&cfg, &mut quiet()).unwrap();
    // 5 * 0.3753 + (0.57 + 0.74 + 0.61 + 0.65 + 0.60), over 10.
    assert!((report.nds.unwrap() - 0.50465).abs() < 1e-12);
}
