//! Evaluates every training objective for ideal and perturbed predictions.
//!
//! `cargo run --example loss_terms`

use anchorfree3d::geom::Box3D;
use anchorfree3d::losses::{balanced_l1, compute_losses, LossConfig};
use anchorfree3d::maps::PredictionMaps;
use anchorfree3d::pipeline::RunConfig;
use anchorfree3d::targets::encode_targets;

fn main() -> anchorfree3d::Result<()> {
    let run = RunConfig::default();
    let cfg = LossConfig::default();
    println!("b={:.7} c_b={:.7}", cfg.b(), cfg.c_b());
    for x in [0.0, 0.5, 1.0, 10.0] {
        let (v, d) = balanced_l1(x, &cfg);
        println!("balanced_l1 x={x} value={v:.7} slope={d:.7}");
    }
    let boxes = [Box3D::new(12.1, 0.7, -1.0, 4.0, 1.7, 1.5, 0.3)?];
    let t = encode_targets(&boxes, &[0], &run.encoder())?;
    let ideal = PredictionMaps::from_targets(&t);
    let mut shifted = ideal.clone();
    let p = t.positives[0];
    let i = shifted.reg.z.index(p.row, p.col, 0);
    shifted.reg.z.data[i] += 1.0;
    for (name, pred) in [("ideal", &ideal), ("z+1", &shifted)] {
        let r = compute_losses(pred, &t, &run.grid, &cfg)?;
        let terms: Vec<String> = r.terms.named().iter().map(|(n, v)| format!("{n}={:.6}", v.unwrap_or(f64::NAN))).collect();
        println!("{name}: total={:.6} {}", r.total, terms.join(" "));
    }
    Ok(())
}
