use std::fs;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::geom::Grid2D;
use crate::pointcloud::{format_labels, parse_labels, read_kitti_bin, synth_scene, write_kitti_bin, LabeledScene, PointCloud};
use crate::voxelize::{bev_collapse_with_stride, voxelize_mean};

/// Held-out scenes draw seeds from a disjoint block.
const VAL_SEED_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

pub fn scene_seed(base: u64, split: Split, index: usize) -> u64 {
    let offset = match split {
        Split::Train => 0,
        Split::Val => VAL_SEED_OFFSET,
    };
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(offset).wrapping_add(index as u64)
}

/// A scene with its frame id (`000000`, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: String,
    pub scene: LabeledScene,
}

pub fn frame_id(i: usize) -> String {
    format!("{i:06}")
}

pub fn synth_frames(cfg: &RunConfig, split: Split, count: usize) -> Result<Vec<Frame>> {
    (0..count)
        .map(|i| {
            Ok(Frame {
                id: frame_id(i),
                scene: synth_scene(&cfg.scene, scene_seed(cfg.seed, split, i))?,
            })
        })
        .collect()
}

/// Frames from `cfg.data` if set, otherwise `count` synthesized scenes.
pub fn load_frames(cfg: &RunConfig, split: Split, count: usize) -> Result<Vec<Frame>> {
    match &cfg.data {
        Some(dir) => read_dataset(dir, &cfg.class_names()),
        None => synth_frames(cfg, split, count),
    }
}

/// Writes `velodyne/<id>.bin` and `labels/<id>.txt` for every frame.
pub fn write_dataset(dir: &Path, frames: &[Frame], class_names: &[String]) -> Result<()> {
    let velo = dir.join("velodyne");
    let labels = dir.join("labels");
    for d in [&velo, &labels] {
        fs::create_dir_all(d).map_err(|e| Error::file(d, e))?;
    }
    for f in frames {
        let p = velo.join(format!("{}.bin", f.id));
        fs::write(&p, write_kitti_bin(&f.scene.cloud)).map_err(|e| Error::file(&p, e))?;
        let p = labels.join(format!("{}.txt", f.id));
        fs::write(&p, format_labels(&f.scene.boxes, &f.scene.classes, class_names)).map_err(|e| Error::file(&p, e))?;
    }
    Ok(())
}

/// Sorted file stems with the given extension.
pub fn list_ids(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::file(dir, e))? {
        let path = entry.map_err(|e| Error::file(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn read_labels_file(path: &Path, class_names: &[String]) -> Result<(Vec<crate::geom::Box3D>, Vec<usize>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_labels(&text, class_names)
}

/// Reads a dataset written by [`write_dataset`]. A frame without a label
/// file has no boxes.
pub fn read_dataset(dir: &Path, class_names: &[String]) -> Result<Vec<Frame>> {
    let velo = dir.join("velodyne");
    let labels = dir.join("labels");
    let mut frames = Vec::new();
    for id in list_ids(&velo, "bin")? {
        let p = velo.join(format!("{id}.bin"));
        let cloud = read_kitti_bin(&fs::read(&p).map_err(|e| Error::file(&p, e))?)?;
        let lp: PathBuf = labels.join(format!("{id}.txt"));
        let (boxes, classes) = if lp.exists() {
            read_labels_file(&lp, class_names)?
        } else {
            (Vec::new(), Vec::new())
        };
        frames.push(Frame {
            id,
            scene: LabeledScene { cloud, boxes, classes },
        });
    }
    Ok(frames)
}

/// Network input plane for a point cloud.
pub fn network_input(cloud: &PointCloud, cfg: &RunConfig) -> Result<Grid2D> {
    let vox = voxelize_mean(cloud, &cfg.grid)?;
    bev_collapse_with_stride(&vox, cfg.input_stride())
}
