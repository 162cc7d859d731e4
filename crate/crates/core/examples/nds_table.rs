//! nuScenes detection score for five reference (mAP, mTP) rows.
//!
//! `cargo run --example nds_table`

use anchorfree3d::evalkit::nds;

fn main() {
    let rows = [
        (37.53, [0.43, 0.26, 0.39, 0.35, 0.40]),
        (42.97, [0.40, 0.23, 0.32, 0.29, 0.35]),
        (48.34, [0.38, 0.19, 0.34, 0.27, 0.36]),
        (50.70, [0.30, 0.18, 0.29, 0.24, 0.34]),
        (51.57, [0.29, 0.20, 0.30, 0.25, 0.32]),
    ];
    for (map, mtp) in rows {
        println!("map={map:.2} mtp={mtp:?} nds={:.3}", 100.0 * nds(map / 100.0, mtp));
    }
}
