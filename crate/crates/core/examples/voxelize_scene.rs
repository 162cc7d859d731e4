//! Synthesizes a LiDAR scene, voxelizes it and collapses it to a BEV plane.
//!
//! `cargo run --example voxelize_scene -- 7`

use anchorfree3d::pointcloud::{synth_scene, SceneSpec};
use anchorfree3d::voxelize::{bev_collapse, voxelize_mean, GridConfig};

fn main() -> anchorfree3d::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let spec = SceneSpec::default();
    let scene = synth_scene(&spec, seed)?;
    let grid = GridConfig::default();
    let vox = voxelize_mean(&scene.cloud, &grid)?;
    let bev = bev_collapse(&vox)?;
    let occupied = (0..bev.height * bev.width).filter(|&i| bev.data[i * bev.channels] > 0.0).count();
    println!("points={} boxes={}", scene.cloud.len(), scene.boxes.len());
    println!("voxels={} retained_points={}", vox.len(), vox.retained_points());
    println!("bev={}x{}x{} occupied_cells={occupied}", bev.height, bev.width, bev.channels);
    Ok(())
}
