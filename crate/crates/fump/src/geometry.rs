//! Planar rigid transforms with a vertical offset and the coordinate
//! transformation chain that turns per-frame ego-relative object poses into
//! each object's own local-frame trajectory.
//!
//! Rotations are yaw-only (about z). In a target frame built from a pose
//! with heading ψ, the heading direction maps to +x.

use crate::{Error, Result};

/// Normalize an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a.rem_euclid(two_pi); // [0, 2pi)
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Position plus yaw heading. Yaw is normalized into `(-pi, pi]` on
/// construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Pose {
            x,
            y,
            z,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Pose::new(x, y, 0.0, yaw)
    }

    pub fn position(&self) -> (f64, f64, f64) {
        (self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.yaw.is_finite()
    }
}

/// 4×4 homogeneous transform whose rotation is a yaw about z.
///
/// Constructors keep the invariants (orthonormal rotation block with
/// determinant +1, bottom row `[0,0,0,1]`) by building only from a yaw angle
/// and a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    m: [[f64; 4]; 4],
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self::from_yaw_translation(0.0, (0.0, 0.0, 0.0))
    }

    pub fn from_yaw_translation(yaw: f64, t: (f64, f64, f64)) -> Self {
        let (s, c) = yaw.sin_cos();
        RigidTransform {
            m: [
                [c, -s, 0.0, t.0],
                [s, c, 0.0, t.1],
                [0.0, 0.0, 1.0, t.2],
                [0.0, 0.0, 0.0, 1.0],
            ],
        }
    }

    /// Transform mapping the frame of `pose` into the world: rotate by
    /// `pose.yaw`, then translate to `pose`'s position.
    pub fn from_pose(pose: &Pose) -> Self {
        Self::from_yaw_translation(pose.yaw, pose.position())
    }

    /// World→target transform anchored at `pose_w` with ψ = `pose_w.yaw`:
    ///
    /// ```text
    /// [  cosψ  sinψ  0  -x0·cosψ - y0·sinψ ]
    /// [ -sinψ  cosψ  0   x0·sinψ - y0·cosψ ]
    /// [   0      0   1        -z0          ]
    /// [   0      0   0          1          ]
    /// ```
    ///
    /// Applying it to `pose_w`'s own position gives exactly the origin.
    pub fn world_to_target(pose_w: &Pose) -> Self {
        let (s, c) = pose_w.yaw.sin_cos();
        let (x0, y0, z0) = pose_w.position();
        RigidTransform {
            m: [
                [c, s, 0.0, -(x0 * c + y0 * s)],
                [-s, c, 0.0, x0 * s - y0 * c],
                [0.0, 0.0, 1.0, -z0],
                [0.0, 0.0, 0.0, 1.0],
            ],
        }
    }

    pub fn matrix(&self) -> [[f64; 4]; 4] {
        self.m
    }

    /// Yaw angle of the rotation block.
    pub fn yaw(&self) -> f64 {
        self.m[1][0].atan2(self.m[0][0])
    }

    pub fn translation(&self) -> (f64, f64, f64) {
        (self.m[0][3], self.m[1][3], self.m[2][3])
    }

    /// Matrix product `self · other` (apply `other` first).
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let a = &self.m;
        let b = &other.m;
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..4).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        // Clean up the structural entries so invariants hold exactly.
        out[3] = [0.0, 0.0, 0.0, 1.0];
        out[2][0] = 0.0;
        out[2][1] = 0.0;
        out[0][2] = 0.0;
        out[1][2] = 0.0;
        out[2][2] = 1.0;
        RigidTransform { m: out }
    }

    /// Closed-form inverse (transpose the rotation, counter-rotate the
    /// translation).
    pub fn inverse(&self) -> RigidTransform {
        let (c, s) = (self.m[0][0], self.m[1][0]);
        let (tx, ty, tz) = self.translation();
        RigidTransform {
            m: [
                [c, s, 0.0, -(tx * c + ty * s)],
                [-s, c, 0.0, tx * s - ty * c],
                [0.0, 0.0, 1.0, -tz],
                [0.0, 0.0, 0.0, 1.0],
            ],
        }
    }

    /// Apply to a 3-D point.
    pub fn apply(&self, p: (f64, f64, f64)) -> (f64, f64, f64) {
        let (x, y, z) = p;
        (
            (self.m[0][0] * x + self.m[0][1] * y) + self.m[0][2] * z + self.m[0][3],
            (self.m[1][0] * x + self.m[1][1] * y) + self.m[1][2] * z + self.m[1][3],
            (self.m[2][0] * x + self.m[2][1] * y) + self.m[2][2] * z + self.m[2][3],
        )
    }

    /// Apply to a planar point, returning (x, y).
    pub fn apply_planar(&self, p: (f64, f64)) -> (f64, f64) {
        let (x, y, _) = self.apply((p.0, p.1, 0.0));
        (x, y)
    }

    /// Apply to a pose: transform the position, add the yaw.
    pub fn apply_pose(&self, pose: &Pose) -> Pose {
        let (x, y, z) = self.apply(pose.position());
        Pose::new(x, y, z, pose.yaw + self.yaw())
    }

    /// Max deviation of the rotation block from orthonormality plus the
    /// structural rows; used by tests and debug checks.
    pub fn invariant_residual(&self) -> f64 {
        let r = [
            [self.m[0][0], self.m[0][1]],
            [self.m[1][0], self.m[1][1]],
        ];
        let dot_rows = r[0][0] * r[1][0] + r[0][1] * r[1][1];
        let n0 = (r[0][0] * r[0][0] + r[0][1] * r[0][1] - 1.0).abs();
        let n1 = (r[1][0] * r[1][0] + r[1][1] * r[1][1] - 1.0).abs();
        let det = (r[0][0] * r[1][1] - r[0][1] * r[1][0] - 1.0).abs();
        dot_rows.abs().max(n0).max(n1).max(det)
    }
}

/// Convert per-timestep ego-frame object poses into the object's t0-anchored
/// local trajectory.
///
/// Step 1 maps every box into the world frame through the matching
/// `ego_to_world` transform. Step 2 builds a world→target transform from the
/// t0 world pose, with the target heading ψ = box yaw at t0 (ego frame) plus
/// the ego yaw at t0 (world frame). Step 3 maps every world position into
/// that target frame and returns the (x, y) sequence; the t0 sample is the
/// origin.
pub fn transform_chain(
    boxes_ego: &[Pose],
    ego_to_world: &[RigidTransform],
) -> Result<Vec<(f64, f64)>> {
    if boxes_ego.is_empty() {
        return Err(Error::invalid("transform_chain: empty input"));
    }
    if boxes_ego.len() != ego_to_world.len() {
        return Err(Error::invalid(format!(
            "transform_chain: {} boxes but {} ego transforms",
            boxes_ego.len(),
            ego_to_world.len()
        )));
    }
    let world_positions: Vec<(f64, f64, f64)> = boxes_ego
        .iter()
        .zip(ego_to_world)
        .map(|(b, t)| t.apply(b.position()))
        .collect();
    let psi = normalize_angle(boxes_ego[0].yaw + ego_to_world[0].yaw());
    let anchor = Pose::new(
        world_positions[0].0,
        world_positions[0].1,
        world_positions[0].2,
        psi,
    );
    let to_target = RigidTransform::world_to_target(&anchor);
    Ok(world_positions
        .iter()
        .map(|&p| {
            let (x, y, _) = to_target.apply(p);
            (x, y)
        })
        .collect())
}

/// Heading of a point sequence from its first displacement longer than
/// `1e-9` m; `fallback` (typically the ego heading) when every displacement
/// is degenerate.
pub fn heading_from_displacements(points: &[(f64, f64)], fallback: f64) -> f64 {
    for pair in points.windows(2) {
        let dx = pair[1].0 - pair[0].0;
        let dy = pair[1].1 - pair[0].1;
        if dx.hypot(dy) > 1e-9 {
            return dy.atan2(dx);
        }
    }
    normalize_angle(fallback)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn zero_pose_gives_identity() {
        let t = RigidTransform::world_to_target(&Pose::new(0.0, 0.0, 0.0, 0.0));
        assert_eq!(t.matrix(), RigidTransform::identity().matrix());
    }

    #[test]
    fn anchor_maps_to_origin_exactly() {
        let pose = Pose::new(13.7, -2.9, 1.25, 2.1);
        let t = RigidTransform::world_to_target(&pose);
        let (x, y, z) = t.apply(pose.position());
        assert_eq!((x, y, z), (0.0, 0.0, 0.0));
    }

    #[test]
    fn point_ahead_maps_to_positive_x() {
        // Pose (1,2,0,pi/2): the point (1,3,0) is one meter ahead along the
        // heading; rotating the offset (0,1) by -pi/2 lands it at (1,0).
        let t = RigidTransform::world_to_target(&Pose::new(1.0, 2.0, 0.0, PI / 2.0));
        let (x, y, z) = t.apply((1.0, 3.0, 0.0));
        assert!((x - 1.0).abs() < 1e-12);
        assert!(y.abs() < 1e-12);
        assert!(z.abs() < 1e-12);
    }

    #[test]
    fn compose_with_identity_is_identity_map() {
        let t = RigidTransform::from_yaw_translation(0.8, (3.0, -1.0, 0.5));
        let composed = t.compose(&RigidTransform::identity());
        assert_eq!(composed.matrix(), t.matrix());
    }

    #[test]
    fn compose_with_numeric_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let pose = Pose::new(
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-PI..PI),
            );
            let t = RigidTransform::world_to_target(&pose);
            let id = t.compose(&t.inverse());
            for i in 0..4 {
                for j in 0..4 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (id.matrix()[i][j] - expect).abs() < 1e-12,
                        "entry ({i},{j}) = {}",
                        id.matrix()[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn pure_translations_add() {
        let a = RigidTransform::from_yaw_translation(0.0, (1.0, 2.0, 3.0));
        let b = RigidTransform::from_yaw_translation(0.0, (-0.5, 4.0, 1.0));
        let c = a.compose(&b);
        assert_eq!(c.translation(), (0.5, 6.0, 4.0));
    }

    #[test]
    fn composition_keeps_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut t = RigidTransform::identity();
        for _ in 0..200 {
            let step = RigidTransform::from_yaw_translation(
                rng.gen_range(-PI..PI),
                (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), 0.0),
            );
            t = t.compose(&step);
            assert!(t.invariant_residual() < 1e-12);
        }
    }

    #[test]
    fn static_scene_gives_zero_trajectory() {
        let boxes = vec![Pose::planar(5.0, 1.0, 0.3); 7];
        let ego = vec![RigidTransform::from_yaw_translation(0.2, (1.0, 1.0, 0.0)); 7];
        let out = transform_chain(&boxes, &ego).unwrap();
        for p in out {
            assert!(p.0.abs() < 1e-12 && p.1.abs() < 1e-12);
        }
    }

    #[test]
    fn straight_world_motion_recovered_in_local_frame() {
        // Object moving along world +x at 2 m/s, heading aligned with its
        // velocity, ego on an arbitrary smooth arc. Local trajectory must be
        // (i, 0) at 0.5 s steps regardless of ego motion.
        let dt = 0.5;
        let n = 7;
        let mut boxes = Vec::new();
        let mut egos = Vec::new();
        for i in 0..n {
            let t = i as f64 * dt;
            let obj_w = Pose::planar(3.0 + 2.0 * t, -1.0, 0.0);
            let ego_yaw = 0.1 * t;
            let ego_w = Pose::planar(0.5 * t, 0.2 * t * t, ego_yaw);
            let ego_to_world = RigidTransform::from_pose(&ego_w);
            let world_to_ego = ego_to_world.inverse();
            boxes.push(world_to_ego.apply_pose(&obj_w));
            egos.push(ego_to_world);
        }
        let out = transform_chain(&boxes, &egos).unwrap();
        for (i, p) in out.iter().enumerate() {
            assert!((p.0 - i as f64).abs() < 1e-9, "step {i}: {p:?}");
            assert!(p.1.abs() < 1e-9, "step {i}: {p:?}");
        }
    }

    #[test]
    fn chain_equals_direct_world_to_target_oracle() {
        // The compose-free oracle maps world ground truth straight into the
        // target frame, bypassing the ego intermediate entirely.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = rng.gen_range(2..9);
            let mut obj_world = Vec::new();
            let mut boxes = Vec::new();
            let mut egos = Vec::new();
            for _ in 0..n {
                let obj = Pose::planar(
                    rng.gen_range(-40.0..40.0),
                    rng.gen_range(-40.0..40.0),
                    rng.gen_range(-PI..PI),
                );
                let ego = Pose::planar(
                    rng.gen_range(-40.0..40.0),
                    rng.gen_range(-40.0..40.0),
                    rng.gen_range(-PI..PI),
                );
                let ego_to_world = RigidTransform::from_pose(&ego);
                boxes.push(ego_to_world.inverse().apply_pose(&obj));
                egos.push(ego_to_world);
                obj_world.push(obj);
            }
            let chain = transform_chain(&boxes, &egos).unwrap();

            let psi = normalize_angle(obj_world[0].yaw);
            let anchor = Pose::new(obj_world[0].x, obj_world[0].y, obj_world[0].z, psi);
            let direct = RigidTransform::world_to_target(&anchor);
            for (i, obj) in obj_world.iter().enumerate() {
                let expect = direct.apply_planar((obj.x, obj.y));
                assert!((chain[i].0 - expect.0).abs() < 1e-9);
                assert!((chain[i].1 - expect.1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn chain_rejects_empty_and_mismatched_input() {
        assert!(transform_chain(&[], &[]).is_err());
        let boxes = vec![Pose::planar(0.0, 0.0, 0.0)];
        let egos = vec![RigidTransform::identity(), RigidTransform::identity()];
        assert!(transform_chain(&boxes, &egos).is_err());
    }

    #[test]
    fn world_round_trip_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let pose = Pose::planar(
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-PI..PI),
            );
            let t = RigidTransform::world_to_target(&pose);
            let p = (
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-100.0..100.0),
                0.0,
            );
            let back = t.inverse().apply(t.apply(p));
            let err = (back.0 - p.0).hypot(back.1 - p.1);
            assert!(err < 1e-9);
        }
    }

    #[test]
    fn heading_fallback_for_stationary_points() {
        let pts = [(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)];
        assert_eq!(heading_from_displacements(&pts, 0.7), 0.7);
        let moving = [(0.0, 0.0), (0.0, 2.0)];
        assert!((heading_from_displacements(&moving, 0.0) - PI / 2.0).abs() < 1e-12);
    }
}
