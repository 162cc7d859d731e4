//! Encodes ground-truth boxes into heatmaps and regression maps, then prints
//! the positives and a coarse view of the center heatmap.
//!
//! `cargo run --example encode_targets`

use anchorfree3d::geom::Box3D;
use anchorfree3d::pipeline::RunConfig;
use anchorfree3d::targets::{encode_targets, gaussian_radius};

fn main() -> anchorfree3d::Result<()> {
    let cfg = RunConfig::default();
    let boxes = [
        Box3D::new(8.3, -3.1, -1.0, 3.9, 1.6, 1.5, 0.2)?,
        Box3D::new(17.0, 4.4, -1.0, 4.4, 1.8, 1.6, -0.6)?,
    ];
    let t = encode_targets(&boxes, &[0, 0], &cfg.encoder())?;
    for p in &t.positives {
        println!("positive row={} col={} class={}", p.row, p.col, p.class);
    }
    println!("radius(4x2 cells, t=0.7)={:.4}", gaussian_radius(4.0, 2.0, 0.7)?);
    let h = &t.center_heat;
    for r in 0..h.height {
        let line: String = (0..h.width)
            .map(|c| match h.get(r, c, 0) {
                v if v >= 0.99 => '#',
                v if v > 0.3 => '+',
                v if v > 0.01 => '.',
                _ => ' ',
            })
            .collect();
        println!("|{line}|");
    }
    Ok(())
}
