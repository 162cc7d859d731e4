//! Rotated bird's-eye-view and 3D IoU between two boxes.
//!
//! `cargo run --example rotated_iou`

use std::f64::consts::FRAC_PI_4;

use anchorfree3d::geom::{bev_corners, bev_intersection_area, iou_3d, rotated_iou_bev, Box3D};

fn main() -> anchorfree3d::Result<()> {
    let a = Box3D::new(10.0, 2.0, -1.0, 4.0, 1.8, 1.5, 0.0)?;
    for (dx, yaw) in [(0.0, 0.0), (0.5, 0.0), (0.0, FRAC_PI_4), (1.0, 0.3), (5.0, 0.0)] {
        let b = Box3D::new(10.0 + dx, 2.0, -0.8, 4.0, 1.8, 1.5, yaw)?;
        println!(
            "dx={dx:.1} yaw={yaw:.3} inter={:.4} iou_bev={:.4} iou_3d={:.4}",
            bev_intersection_area(&a, &b),
            rotated_iou_bev(&a, &b),
            iou_3d(&a, &b)
        );
    }
    println!("corners={:?}", bev_corners(&a));
    Ok(())
}
