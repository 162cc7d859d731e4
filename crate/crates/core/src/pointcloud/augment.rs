use super::LabeledScene;
use crate::geom::{wrap_angle, Box3D};

/// Whole-scene augmentation, applied as mirror (y -> -y), then rotation about
/// the sensor's z axis, then isotropic scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalAug {
    pub flip: bool,
    pub rotation: f64,
    pub scale: f64,
}

impl Default for GlobalAug {
    fn default() -> Self {
        Self {
            flip: false,
            rotation: 0.0,
            scale: 1.0,
        }
    }
}

impl GlobalAug {
    /// Parameters that undo `self` when applied in the same fixed order.
    pub fn inverse(&self) -> Self {
        // Mirroring conjugates a rotation into its opposite.
        Self {
            flip: self.flip,
            rotation: if self.flip { self.rotation } else { -self.rotation },
            scale: 1.0 / self.scale,
        }
    }

    pub fn apply_point(&self, x: f64, y: f64, z: f64) -> [f64; 3] {
        let y = if self.flip { -y } else { y };
        let (s, c) = self.rotation.sin_cos();
        [
            self.scale * (c * x - s * y),
            self.scale * (s * x + c * y),
            self.scale * z,
        ]
    }

    pub fn apply_box(&self, b: &Box3D) -> Box3D {
        let [cx, cy, cz] = self.apply_point(b.cx, b.cy, b.cz);
        let yaw = if self.flip { -b.yaw } else { b.yaw } + self.rotation;
        Box3D {
            cx,
            cy,
            cz,
            l: b.l * self.scale,
            w: b.w * self.scale,
            h: b.h * self.scale,
            yaw: wrap_angle(yaw).expect("finite yaw"),
        }
    }
}

/// Applies the same mirror/rotation/scale map to every point and box.
///
/// # Panics
/// If `params.scale` is not positive.
pub fn augment_global(scene: &LabeledScene, params: &GlobalAug) -> LabeledScene {
    assert!(params.scale > 0.0, "augmentation scale must be positive");
    let mut out = scene.clone();
    for p in &mut out.cloud.points {
        let [x, y, z] = params.apply_point(p.x, p.y, p.z);
        p.x = x;
        p.y = y;
        p.z = z;
    }
    for b in &mut out.boxes {
        *b = params.apply_box(b);
    }
    out
}
