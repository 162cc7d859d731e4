//! Decodes ideal head outputs into boxes, with and without keypoint-sensitive
//! confidence warping, and times the warping step.
//!
//! `cargo run --release --example detect_kswarp`

use std::time::Instant;

use anchorfree3d::infer::{assemble_boxes, detect, kswarp, Peak};
use anchorfree3d::maps::PredictionMaps;
use anchorfree3d::pipeline::{prepare, synth_frames, RunConfig, Split};

fn main() -> anchorfree3d::Result<()> {
    let mut cfg = RunConfig::default();
    let frame = synth_frames(&cfg, Split::Val, 1)?.remove(0);
    let (_, targets) = prepare(&frame.scene, &cfg)?;
    let pred = PredictionMaps::from_targets(&targets);
    for warp in [true, false] {
        cfg.infer.kswarp = warp;
        let out = detect(&pred, &cfg.grid, &cfg.infer)?;
        println!("kswarp={warp} detections={}", out.detections.len());
        for d in &out.detections {
            let b = &d.bbox;
            println!("  cx={:.3} cy={:.3} yaw={:.3} conf={:.4}", b.cx, b.cy, b.yaw, d.confidence);
        }
    }
    for b in &frame.scene.boxes {
        println!("truth cx={:.3} cy={:.3} yaw={:.3}", b.cx, b.cy, b.yaw);
    }

    let peaks: Vec<Peak> = targets
        .positives
        .iter()
        .map(|p| Peak { row: p.row, col: p.col, class: p.class, confidence: 1.0 })
        .collect();
    let (boxes, _) = assemble_boxes(&peaks, &pred.reg, &cfg.grid)?;
    let reps = 1000;
    let t = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(kswarp(&pred.center_heat, pred.corner_heat.as_ref(), &boxes, &cfg.grid)?);
    }
    println!("kswarp_us_per_frame={:.2}", t.elapsed().as_secs_f64() * 1e6 / reps as f64);
    Ok(())
}
