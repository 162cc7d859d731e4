//! Greedy matching and AP over 40 recall positions on a hand-made frame.
//!
//! `cargo run --example evaluate_ap`

use anchorfree3d::evalkit::{ap40, evaluate, match_detections, EvalConfig, EvalFrame, IouMode};
use anchorfree3d::geom::Box3D;
use anchorfree3d::infer::Detection;

fn main() -> anchorfree3d::Result<()> {
    let gts = vec![
        Box3D::new(10.0, 0.0, -1.0, 4.0, 1.8, 1.5, 0.0)?,
        Box3D::new(20.0, 3.0, -1.0, 4.0, 1.8, 1.5, 0.5)?,
        Box3D::new(30.0, -4.0, -1.0, 4.0, 1.8, 1.5, -0.2)?,
    ];
    let det = |b: Box3D, confidence| Detection { bbox: b, class: 0, confidence };
    let dets = vec![
        det(Box3D { cx: 10.2, ..gts[0] }, 0.9),
        det(Box3D { cx: 10.0, ..gts[0] }, 0.8),
        det(Box3D { yaw: 0.45, ..gts[1] }, 0.7),
        det(Box3D::new(40.0, 0.0, -1.0, 4.0, 1.8, 1.5, 0.0)?, 0.6),
    ];
    let m = match_detections(&dets, &gts, 0.7, IouMode::Bev);
    for (conf, tp) in &m.scored {
        println!("confidence={conf} tp={tp}");
    }
    println!("ap40={:.4}", ap40(&m)?);
    let frames = [EvalFrame { detections: dets, boxes: gts, classes: vec![0; 3] }];
    print!("{}", evaluate(&frames, &["Car".to_string()], &EvalConfig::for_classes(&["Car".to_string()]))?.to_table());
    Ok(())
}
