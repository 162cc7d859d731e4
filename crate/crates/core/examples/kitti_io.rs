//! Round-trips a scan through the KITTI velodyne layout and converts a
//! camera-frame label into the LiDAR frame.
//!
//! `cargo run --example kitti_io`

use anchorfree3d::pointcloud::{parse_kitti_camera_labels, read_kitti_bin, synth_scene, write_kitti_bin, KittiCalib, SceneSpec};

const CALIB: &str = "\
R0_rect: 1 0 0 0 1 0 0 0 1
Tr_velo_to_cam: 0 -1 0 0 0 0 -1 0 1 0 0 0
";

const LABEL: &str = "Car 0.00 0 -1.58 587.0 173.3 614.1 200.1 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59\n";

fn main() -> anchorfree3d::Result<()> {
    let scene = synth_scene(&SceneSpec::default(), 3)?;
    let bytes = write_kitti_bin(&scene.cloud);
    let back = read_kitti_bin(&bytes)?;
    println!("points={} bytes={} round_trip={}", scene.cloud.len(), bytes.len(), back.len() == scene.cloud.len());
    let calib = KittiCalib::parse(CALIB)?;
    let (boxes, classes) = parse_kitti_camera_labels(LABEL, &calib, &["Car".to_string()])?;
    for (b, c) in boxes.iter().zip(&classes) {
        println!("class={c} cx={:.3} cy={:.3} cz={:.3} l={} w={} h={} yaw={:.4}", b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw);
    }
    Ok(())
}
