//! Synthetic labeled LiDAR scenes.
//!
//! The sensor sits at the origin. Each box contributes points only on the
//! vertical faces that face the sensor and on its top face, so box centers
//! fall in empty space the way real scans of solid objects do. Randomness
//! comes from a seeded ChaCha8 stream, which is portable across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LabeledScene, Point, PointCloud};
use crate::error::{Error, Result};
use crate::geom::{bev_corners, bev_intersection_area, Box3D};
use crate::kv::{parse_f64, parse_kv, parse_pair, parse_usize};

/// Surface points are displaced along the face normal by at most this much.
pub const SURFACE_JITTER: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSizes {
    pub name: String,
    pub length: (f64, f64),
    pub width: (f64, f64),
    pub height: (f64, f64),
}

impl ClassSizes {
    /// Built-in size ranges for the usual KITTI categories.
    pub fn builtin(name: &str) -> Option<Self> {
        let (length, width, height) = match name {
            "Car" => ((3.4, 4.6), (1.5, 1.9), (1.4, 1.7)),
            "Pedestrian" => ((0.5, 0.9), (0.5, 0.8), (1.5, 1.9)),
            "Cyclist" => ((1.5, 1.9), (0.5, 0.8), (1.6, 1.9)),
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            length,
            width,
            height,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub classes: Vec<ClassSizes>,
    /// Inclusive range of boxes per scene.
    pub box_count: (usize, usize),
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub ground_z: f64,
    pub points_per_box: (usize, usize),
    /// Ground clutter points per square meter of the spatial range.
    pub clutter_density: f64,
    pub yaw_range: (f64, f64),
    /// Minimum clearance between box footprints, meters.
    pub gap: f64,
    pub max_attempts: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            classes: vec![ClassSizes::builtin("Car").unwrap()],
            box_count: (2, 6),
            x_range: (0.0, 70.0),
            y_range: (-40.0, 40.0),
            ground_z: -1.73,
            points_per_box: (60, 200),
            clutter_density: 0.05,
            yaw_range: (-std::f64::consts::PI, std::f64::consts::PI),
            gap: 0.2,
            max_attempts: 1000,
        }
    }
}

impl SceneSpec {
    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    /// Reads a scene spec from flat key-value text, starting from defaults.
    /// Unknown keys are rejected.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (line, key, value) in parse_kv(text)? {
            spec.set(&key, &value).map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let usize_pair = |key: &str, value: &str| -> Result<(usize, usize)> {
            let (a, b) = value
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("{key}: expected `min,max`")))?;
            Ok((parse_usize(key, a.trim())?, parse_usize(key, b.trim())?))
        };
        match key {
            "classes" => {
                let mut classes = Vec::new();
                for name in value.split(',').map(str::trim) {
                    let existing = self.classes.iter().find(|c| c.name == name).cloned();
                    let sizes = existing
                        .or_else(|| ClassSizes::builtin(name))
                        .unwrap_or(ClassSizes {
                            name: name.to_string(),
                            length: (1.0, 1.0),
                            width: (1.0, 1.0),
                            height: (1.0, 1.0),
                        });
                    classes.push(sizes);
                }
                self.classes = classes;
            }
            "boxes" => self.box_count = usize_pair(key, value)?,
            "x_range" => self.x_range = parse_pair(key, value)?,
            "y_range" => self.y_range = parse_pair(key, value)?,
            "ground_z" => self.ground_z = parse_f64(key, value)?,
            "points_per_box" => self.points_per_box = usize_pair(key, value)?,
            "clutter_density" => self.clutter_density = parse_f64(key, value)?,
            "yaw_range" => self.yaw_range = parse_pair(key, value)?,
            "gap" => self.gap = parse_f64(key, value)?,
            "max_attempts" => self.max_attempts = parse_usize(key, value)?,
            _ => {
                let (class, dim) = key
                    .split_once('.')
                    .ok_or_else(|| Error::Config(format!("unknown scene key `{key}`")))?;
                let sizes = self
                    .classes
                    .iter_mut()
                    .find(|c| c.name == class)
                    .ok_or_else(|| Error::Config(format!("`{key}` names an unlisted class")))?;
                let range = parse_pair(key, value)?;
                match dim {
                    "length" => sizes.length = range,
                    "width" => sizes.width = range,
                    "height" => sizes.height = range,
                    _ => return Err(Error::Config(format!("unknown scene key `{key}`"))),
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.classes.is_empty() {
            return bad("at least one class is required".into());
        }
        for c in &self.classes {
            for (dim, (lo, hi)) in [("length", c.length), ("width", c.width), ("height", c.height)] {
                if !(lo > 0.0 && hi >= lo) {
                    return bad(format!("{}.{dim} must satisfy 0 < min <= max", c.name));
                }
            }
        }
        if self.box_count.0 > self.box_count.1 || self.points_per_box.0 > self.points_per_box.1 {
            return bad("ranges must satisfy min <= max".into());
        }
        if !(self.x_range.0 < self.x_range.1 && self.y_range.0 < self.y_range.1) {
            return bad("spatial range is empty".into());
        }
        if !(self.yaw_range.0 <= self.yaw_range.1) || self.clutter_density < 0.0 || self.gap < 0.0 {
            return bad("yaw range, clutter density or gap out of range".into());
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn footprint_inside(b: &Box3D, spec: &SceneSpec) -> bool {
    bev_corners(b).iter().all(|p| {
        p[0] >= spec.x_range.0 && p[0] < spec.x_range.1 && p[1] >= spec.y_range.0 && p[1] < spec.y_range.1
    })
}

fn grown(b: &Box3D, margin: f64) -> Box3D {
    Box3D {
        l: b.l + 2.0 * margin,
        w: b.w + 2.0 * margin,
        ..*b
    }
}

/// Generates a deterministic labeled scene for `(spec, seed)`.
pub fn synth_scene(spec: &SceneSpec, seed: u64) -> Result<LabeledScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(spec.box_count.0..=spec.box_count.1);
    let mut boxes: Vec<Box3D> = Vec::with_capacity(count);
    let mut classes = Vec::with_capacity(count);
    for index in 0..count {
        let class = rng.gen_range(0..spec.classes.len());
        let sizes = &spec.classes[class];
        let l = uniform(&mut rng, sizes.length);
        let w = uniform(&mut rng, sizes.width);
        let h = uniform(&mut rng, sizes.height);
        let mut placed = None;
        for _ in 0..spec.max_attempts {
            let cx = uniform(&mut rng, spec.x_range);
            let cy = uniform(&mut rng, spec.y_range);
            let yaw = uniform(&mut rng, spec.yaw_range);
            let cand = Box3D::new(cx, cy, spec.ground_z + 0.5 * h, l, w, h, yaw)?;
            if !footprint_inside(&cand, spec) {
                continue;
            }
            let probe = grown(&cand, 0.5 * spec.gap);
            if boxes
                .iter()
                .all(|o| bev_intersection_area(&probe, &grown(o, 0.5 * spec.gap)) == 0.0)
            {
                placed = Some(cand);
                break;
            }
        }
        let b = placed.ok_or(Error::Placement {
            index,
            attempts: spec.max_attempts,
        })?;
        boxes.push(b);
        classes.push(class);
    }

    let mut points = Vec::new();
    for b in &boxes {
        let n = rng.gen_range(spec.points_per_box.0..=spec.points_per_box.1);
        sample_visible_surface(b, n, &mut rng, &mut points);
    }

    let area = (spec.x_range.1 - spec.x_range.0) * (spec.y_range.1 - spec.y_range.0);
    let clutter = (spec.clutter_density * area).round() as usize;
    let keep_out: Vec<Box3D> = boxes.iter().map(|b| grown(b, 0.1)).collect();
    for _ in 0..clutter {
        let x = uniform(&mut rng, spec.x_range);
        let y = uniform(&mut rng, spec.y_range);
        let z = spec.ground_z + rng.gen_range(-SURFACE_JITTER..=SURFACE_JITTER);
        let intensity = rng.gen_range(0.0..0.2);
        let inside = keep_out
            .iter()
            .any(|b| b.contains([x, y, b.cz]));
        if !inside {
            points.push(Point { x, y, z, intensity });
        }
    }

    let scene = LabeledScene {
        cloud: PointCloud { points },
        boxes,
        classes,
    };
    scene.validate()?;
    Ok(scene)
}

/// Face in box-local coordinates: center, outward normal, and the two
/// in-plane half-extent axes.
struct Face {
    center: [f64; 3],
    normal: [f64; 3],
    u: [f64; 3],
    v: [f64; 3],
}

fn sample_visible_surface(b: &Box3D, n: usize, rng: &mut ChaCha8Rng, out: &mut Vec<Point>) {
    let (hl, hw, hh) = (0.5 * b.l, 0.5 * b.w, 0.5 * b.h);
    let all = [
        Face { center: [hl, 0.0, 0.0], normal: [1.0, 0.0, 0.0], u: [0.0, hw, 0.0], v: [0.0, 0.0, hh] },
        Face { center: [-hl, 0.0, 0.0], normal: [-1.0, 0.0, 0.0], u: [0.0, hw, 0.0], v: [0.0, 0.0, hh] },
        Face { center: [0.0, hw, 0.0], normal: [0.0, 1.0, 0.0], u: [hl, 0.0, 0.0], v: [0.0, 0.0, hh] },
        Face { center: [0.0, -hw, 0.0], normal: [0.0, -1.0, 0.0], u: [hl, 0.0, 0.0], v: [0.0, 0.0, hh] },
    ];
    let (s, c) = b.yaw.sin_cos();
    let to_world = |p: [f64; 3]| [b.cx + c * p[0] - s * p[1], b.cy + s * p[0] + c * p[1], b.cz + p[2]];
    let rotate = |p: [f64; 3]| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]];

    let mut faces: Vec<&Face> = all
        .iter()
        .filter(|f| {
            let fc = to_world(f.center);
            let nw = rotate(f.normal);
            nw[0] * -fc[0] + nw[1] * -fc[1] > 0.0
        })
        .collect();
    let top = Face {
        center: [0.0, 0.0, hh],
        normal: [0.0, 0.0, 1.0],
        u: [hl, 0.0, 0.0],
        v: [0.0, hw, 0.0],
    };
    faces.push(&top);

    let area = |f: &Face| {
        let nu = (f.u[0].powi(2) + f.u[1].powi(2) + f.u[2].powi(2)).sqrt();
        let nv = (f.v[0].powi(2) + f.v[1].powi(2) + f.v[2].powi(2)).sqrt();
        4.0 * nu * nv
    };
    let total: f64 = faces.iter().map(|f| area(f)).sum();
    let reflectance: f64 = rng.gen_range(0.3..0.9);
    for _ in 0..n {
        let mut pick = rng.gen_range(0.0..total);
        let mut face = faces[faces.len() - 1];
        for f in &faces {
            let a = area(f);
            if pick < a {
                face = f;
                break;
            }
            pick -= a;
        }
        let a = rng.gen_range(-1.0..=1.0);
        let bb = rng.gen_range(-1.0..=1.0);
        let j = rng.gen_range(-SURFACE_JITTER..=SURFACE_JITTER);
        let mut local = [0.0; 3];
        for k in 0..3 {
            local[k] = face.center[k] + a * face.u[k] + bb * face.v[k] + j * face.normal[k];
        }
        let [x, y, z] = to_world(local);
        let intensity = (reflectance + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0);
        out.push(Point { x, y, z, intensity });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rotated_iou_bev;

    fn toy_spec() -> SceneSpec {
        SceneSpec {
            x_range: (0.0, 30.0),
            y_range: (-15.0, 15.0),
            box_count: (3, 6),
            ..SceneSpec::default()
        }
    }

    #[test]
    fn empty_spec_gives_empty_scene() {
        let spec = SceneSpec {
            box_count: (0, 0),
            clutter_density: 0.0,
            ..SceneSpec::default()
        };
        let s = synth_scene(&spec, 7).unwrap();
        assert!(s.boxes.is_empty() && s.cloud.is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = toy_spec();
        assert_eq!(synth_scene(&spec, 3).unwrap(), synth_scene(&spec, 3).unwrap());
        assert_ne!(synth_scene(&spec, 3).unwrap(), synth_scene(&spec, 4).unwrap());
    }

    #[test]
    fn centers_are_empty_and_boxes_disjoint() {
        let spec = SceneSpec {
            classes: ["Car", "Pedestrian", "Cyclist"]
                .iter()
                .map(|n| ClassSizes::builtin(n).unwrap())
                .collect(),
            ..toy_spec()
        };
        for seed in 0..30 {
            let s = synth_scene(&spec, seed).unwrap();
            for (i, a) in s.boxes.iter().enumerate() {
                assert!(footprint_inside(a, &spec));
                for b in &s.boxes[i + 1..] {
                    assert_eq!(rotated_iou_bev(a, b), 0.0);
                }
                for p in &s.cloud.points {
                    let d2 = (p.x - a.cx).powi(2) + (p.y - a.cy).powi(2) + (p.z - a.cz).powi(2);
                    assert!(d2 > 0.2f64.powi(2));
                }
            }
        }
    }

    #[test]
    fn surface_points_stay_near_their_box() {
        let spec = SceneSpec {
            clutter_density: 0.0,
            ..toy_spec()
        };
        let s = synth_scene(&spec, 11).unwrap();
        for p in &s.cloud.points {
            let near = s.boxes.iter().any(|b| {
                let outer = Box3D { h: b.h + 0.022, ..grown(b, 0.011) };
                let inner = Box3D { h: b.h - 0.022, ..grown(b, -0.011) };
                outer.contains(p.xyz()) && !inner.contains(p.xyz())
            });
            assert!(near);
        }
    }

    #[test]
    fn infeasible_placement_errors() {
        let spec = SceneSpec {
            x_range: (0.0, 5.0),
            y_range: (0.0, 5.0),
            box_count: (10, 10),
            max_attempts: 50,
            ..SceneSpec::default()
        };
        assert!(matches!(synth_scene(&spec, 1), Err(Error::Placement { .. })));
    }

    #[test]
    fn kv_spec_parsing() {
        let spec = SceneSpec::from_kv(
            "classes Car,Pedestrian\nboxes 1,2\nPedestrian.width 0.5,0.6\nx_range 0,20\n",
        )
        .unwrap();
        assert_eq!(spec.class_names(), vec!["Car", "Pedestrian"]);
        assert_eq!(spec.classes[1].width, (0.5, 0.6));
        assert_eq!(spec.x_range, (0.0, 20.0));
        assert!(SceneSpec::from_kv("bogus 1\n").is_err());
        assert!(SceneSpec::from_kv("Truck.width 1,2\n").is_err());
    }
}
