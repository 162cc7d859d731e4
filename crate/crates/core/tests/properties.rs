use anchorfree3d::geom::{bev_corners, bilinear_sample, polygon_area, rotated_iou_bev, Box3D, Grid2D};
use anchorfree3d::losses::{balanced_l1, LossConfig};
use anchorfree3d::pointcloud::{augment_global, GlobalAug, LabeledScene, Point, PointCloud};
use anchorfree3d::targets::gaussian_radius;
use anchorfree3d::voxelize::{voxelize_mean, GridConfig};
use proptest::prelude::*;
use std::f64::consts::PI;

fn arb_box() -> impl Strategy<Value = Box3D> {
    (-5.0..5.0f64, -5.0..5.0f64, -1.0..1.0f64, 0.3..6.0f64, 0.3..3.0f64, 0.3..2.0f64, -PI..PI)
        .prop_map(|(cx, cy, cz, l, w, h, yaw)| Box3D::new(cx, cy, cz, l, w, h, yaw).unwrap())
}

fn rigid(b: &Box3D, theta: f64, tx: f64, ty: f64) -> Box3D {
    let (s, c) = theta.sin_cos();
    let mut out = *b;
    out.cx = c * b.cx - s * b.cy + tx;
    out.cy = s * b.cx + c * b.cy + ty;
    out.yaw = b.yaw + theta;
    out
}

fn small_grid() -> GridConfig {
    GridConfig {
        x_range: (0.0, 6.4),
        y_range: (-3.2, 3.2),
        z_range: (-2.0, 2.0),
        vx: 0.4,
        vy: 0.4,
        vz: 0.5,
        downsample: 2,
        max_points_per_voxel: 1_000_000,
    }
}

fn arb_cloud() -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(
        (-1.0..7.5f64, -4.0..4.0f64, -2.5..2.5f64, 0.0..1.0f64).prop_map(|(x, y, z, intensity)| Point { x, y, z, intensity }),
        0..200,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let ab = rotated_iou_bev(&a, &b);
        let ba = rotated_iou_bev(&b, &a);
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((rotated_iou_bev(&a, &a) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iou_is_invariant_under_rigid_motion(a in arb_box(), b in arb_box(), theta in -PI..PI, tx in -20.0..20.0f64, ty in -20.0..20.0f64) {
        let before = rotated_iou_bev(&a, &b);
        let after = rotated_iou_bev(&rigid(&a, theta, tx, ty), &rigid(&b, theta, tx, ty));
        prop_assert!((before - after).abs() < 1e-9, "{before} vs {after}");
    }

    #[test]
    fn footprint_area_matches_sampling(b in arb_box()) {
        // Canonical corner order runs clockwise, so the signed area is negative.
        prop_assert!((polygon_area(&bev_corners(&b)) + b.l * b.w).abs() < 1e-9);
        // Fraction of a lattice over the bounding square that lands inside.
        let reach = b.l.hypot(b.w) / 2.0;
        let n = 300;
        let step = 2.0 * reach / n as f64;
        let (s, c) = b.yaw.sin_cos();
        let mut inside = 0usize;
        for i in 0..n {
            for j in 0..n {
                let dx = -reach + (i as f64 + 0.5) * step;
                let dy = -reach + (j as f64 + 0.5) * step;
                if (dx * c + dy * s).abs() <= b.l / 2.0 && (-dx * s + dy * c).abs() <= b.w / 2.0 {
                    inside += 1;
                }
            }
        }
        let area = inside as f64 * step * step;
        prop_assert!((area - b.l * b.w).abs() / (b.l * b.w) < 0.03, "{area} vs {}", b.l * b.w);
    }

    #[test]
    fn bilinear_matches_tent_sum(vals in prop::collection::vec(-1.0..1.0f64, 20), u in -1.5..5.5f64, v in -1.5..4.5f64) {
        let g = Grid2D::from_vec(4, 5, 1, vals).unwrap();
        let mut want = 0.0;
        for r in 0..4 {
            for c in 0..5 {
                want += (1.0 - (u - c as f64).abs()).max(0.0) * (1.0 - (v - r as f64).abs()).max(0.0) * g.get(r, c, 0);
            }
        }
        prop_assert!((bilinear_sample(&g, u, v) - want).abs() <= 1e-12);
    }

    #[test]
    fn augmentation_inverse_restores_scene(
        flip in any::<bool>(), rotation in -PI..PI, scale in 0.8..1.25f64,
        b in arb_box(), pts in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -1.0..1.0f64), 1..20),
    ) {
        let aug = GlobalAug { flip, rotation, scale };
        let scene = LabeledScene {
            cloud: PointCloud { points: pts.iter().map(|&(x, y, z)| Point { x, y, z, intensity: 0.5 }).collect() },
            boxes: vec![b],
            classes: vec![0],
        };
        let back = augment_global(&augment_global(&scene, &aug), &aug.inverse());
        for (p, q) in scene.cloud.points.iter().zip(&back.cloud.points) {
            prop_assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9 && (p.z - q.z).abs() < 1e-9);
        }
        let r = back.boxes[0];
        prop_assert!((r.cx - b.cx).abs() < 1e-9 && (r.cy - b.cy).abs() < 1e-9 && (r.l - b.l).abs() < 1e-9 && (r.w - b.w).abs() < 1e-9);
        prop_assert!((r.yaw - b.yaw).sin().abs() < 1e-9 && (r.yaw - b.yaw).cos() > 0.0);
    }

    #[test]
    fn augmentation_keeps_box_membership(
        flip in any::<bool>(), rotation in -PI..PI, scale in 0.8..1.25f64,
        b in arb_box(), rel in prop::collection::vec((-0.6..0.6f64, -0.6..0.6f64, -0.6..0.6f64), 1..30),
    ) {
        let aug = GlobalAug { flip, rotation, scale };
        let (s, c) = b.yaw.sin_cos();
        for (u, v, t) in rel {
            // Keep points away from the faces so rounding cannot flip membership.
            if u.abs() > 0.49 && u.abs() < 0.51 || v.abs() > 0.49 && v.abs() < 0.51 || t.abs() > 0.49 && t.abs() < 0.51 {
                continue;
            }
            let (dx, dy) = (u * b.l, v * b.w);
            let p = [b.cx + dx * c - dy * s, b.cy + dx * s + dy * c, b.cz + t * b.h];
            let moved = aug.apply_point(p[0], p[1], p[2]);
            prop_assert_eq!(b.contains(p), aug.apply_box(&b).contains(moved));
        }
    }

    #[test]
    fn voxelization_ignores_point_order(pts in arb_cloud(), seed in any::<u64>()) {
        let grid = small_grid();
        let cloud = PointCloud { points: pts.clone() };
        let mut shuffled = pts;
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let a = voxelize_mean(&cloud, &grid).unwrap();
        let b = voxelize_mean(&PointCloud { points: shuffled }, &grid).unwrap();
        prop_assert_eq!(a.occupied.len(), b.occupied.len());
        for ((ka, fa), (kb, fb)) in a.occupied.iter().zip(&b.occupied) {
            prop_assert_eq!(ka, kb);
            prop_assert_eq!(fa.count, fb.count);
            for k in 0..4 {
                prop_assert!((fa.mean[k] - fb.mean[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn voxelization_partitions_points(pts in arb_cloud()) {
        let grid = small_grid();
        let inside = pts
            .iter()
            .filter(|p| {
                (grid.x_range.0..grid.x_range.1).contains(&p.x)
                    && (grid.y_range.0..grid.y_range.1).contains(&p.y)
                    && (grid.z_range.0..grid.z_range.1).contains(&p.z)
            })
            .count();
        let v = voxelize_mean(&PointCloud { points: pts }, &grid).unwrap();
        prop_assert_eq!(v.retained_points(), inside);
        for (&(i, j, k), f) in &v.occupied {
            // Each voxel's mean point lies inside that voxel.
            let lo = [grid.x_range.0 + i as f64 * grid.vx, grid.y_range.0 + j as f64 * grid.vy, grid.z_range.0 + k as f64 * grid.vz];
            let size = [grid.vx, grid.vy, grid.vz];
            for a in 0..3 {
                prop_assert!(f.mean[a] >= lo[a] - 1e-9 && f.mean[a] <= lo[a] + size[a] + 1e-9);
            }
        }
    }

    #[test]
    fn balanced_l1_derivative_matches_differences(x in prop_oneof![-8.0..-1.05f64, -0.95..-0.05f64, 0.05..0.95f64, 1.05..8.0f64]) {
        let cfg = LossConfig::default();
        let h = 1e-6;
        let fd = (balanced_l1(x + h, &cfg).0 - balanced_l1(x - h, &cfg).0) / (2.0 * h);
        let an = balanced_l1(x, &cfg).1;
        prop_assert!((fd - an).abs() / an.abs().max(1e-3) < 1e-6, "{fd} vs {an}");
    }

    #[test]
    fn radius_is_monotone(l in 1.0..40.0f64, w in 1.0..40.0f64, t in 0.1..0.9f64, dl in 0.0..5.0f64, dt in 0.0..0.09f64) {
        let r = gaussian_radius(l, w, t).unwrap();
        prop_assert!(gaussian_radius(l + dl, w, t).unwrap() >= r - 1e-12);
        prop_assert!(gaussian_radius(l, w + dl, t).unwrap() >= r - 1e-12);
        prop_assert!(gaussian_radius(l, w, t + dt).unwrap() <= r + 1e-12);
    }
}
