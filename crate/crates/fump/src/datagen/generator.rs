//! Seeded synthetic scenario generation.
//!
//! Roads are analytic paths (lines, arcs, line–arc–line turn paths); agents
//! follow them with piecewise-constant acceleration and turn-rate profiles
//! sampled at 0.5 s. Agent-local future trajectories are produced by running
//! the full ego-frame → world → agent-frame transform chain, exactly as a
//! real annotation pipeline would.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::datagen::chain_to_vehicle_frame;
use crate::datagen::io::SceneRecord;
use crate::geometry::{normalize_angle, transform_chain, Pose, RigidTransform};
use crate::scene::{
    AgentClass, AgentRecord, EgoState, MapPolyline, PolylineKind, Scene, HISTORY_STEPS,
    HORIZON_STEPS, STEP_SECONDS,
};
use crate::Result;

const PI: f64 = std::f64::consts::PI;
/// Pose indices: history 0..4, t0 at 4, future 5..11.
const T0: usize = HISTORY_STEPS;
const TOTAL_STEPS: usize = HISTORY_STEPS + 1 + HORIZON_STEPS;
const LANE_SPACING: f64 = 3.5;
/// Minimum ego↔agent clearance enforced on ground-truth futures.
const CLEARANCE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Maneuver {
    KeepLane,
    Turn,
    LaneChange,
    Overtake,
    Stop,
}

impl Maneuver {
    pub fn tag(&self) -> &'static str {
        match self {
            Maneuver::KeepLane => "keep-lane",
            Maneuver::Turn => "turn",
            Maneuver::LaneChange => "lane-change",
            Maneuver::Overtake => "overtake",
            Maneuver::Stop => "stop",
        }
    }
}

/// Analytic path segment.
#[derive(Debug, Clone)]
enum Segment {
    Line { origin: (f64, f64), angle: f64 },
    Arc { center: (f64, f64), radius: f64, theta0: f64, dir: f64 },
}

impl Segment {
    fn point_at(&self, s: f64) -> (f64, f64) {
        match self {
            Segment::Line { origin, angle } => {
                (origin.0 + s * angle.cos(), origin.1 + s * angle.sin())
            }
            Segment::Arc {
                center,
                radius,
                theta0,
                dir,
            } => {
                let theta = theta0 + dir * s / radius;
                (
                    center.0 + radius * theta.cos(),
                    center.1 + radius * theta.sin(),
                )
            }
        }
    }

    fn heading_at(&self, s: f64) -> f64 {
        match self {
            Segment::Line { angle, .. } => *angle,
            Segment::Arc {
                radius,
                theta0,
                dir,
                ..
            } => normalize_angle(theta0 + dir * s / radius + dir * PI / 2.0),
        }
    }
}

/// A lane path: consecutive segments with their lengths.
#[derive(Debug, Clone)]
struct Path {
    parts: Vec<(Segment, f64)>,
}

impl Path {
    fn line(origin: (f64, f64), angle: f64, length: f64) -> Self {
        Path {
            parts: vec![(Segment::Line { origin, angle }, length)],
        }
    }

    fn length(&self) -> f64 {
        self.parts.iter().map(|p| p.1).sum()
    }

    fn point_at(&self, s: f64) -> (f64, f64) {
        let mut rem = s.max(0.0);
        for (seg, len) in &self.parts {
            if rem <= *len {
                return seg.point_at(rem);
            }
            rem -= len;
        }
        let (seg, len) = self.parts.last().unwrap();
        seg.point_at(*len + rem)
    }

    fn heading_at(&self, s: f64) -> f64 {
        let mut rem = s.max(0.0);
        for (seg, len) in &self.parts {
            if rem <= *len {
                return seg.heading_at(rem);
            }
            rem -= len;
        }
        let (seg, len) = self.parts.last().unwrap();
        seg.heading_at(*len + rem)
    }

    /// Polyline sampling for the map (every ~5 m, endpoints included).
    fn sample_polyline(&self) -> Vec<(f64, f64)> {
        let total = self.length();
        let n = (total / 5.0).ceil().max(2.0) as usize;
        (0..=n).map(|i| self.point_at(total * i as f64 / n as f64)).collect()
    }
}

struct Layout {
    lanes: Vec<Path>,
    /// Adjacent same-direction lane for each lane (lane-change target).
    adjacency: Vec<Option<usize>>,
    boundaries: Vec<Path>,
    /// Index of the turn path, present in intersections.
    turn_lane: Option<usize>,
    /// Lanes a vehicle may be spawned on.
    drivable: Vec<usize>,
}

fn build_straight(rng: &mut ChaCha8Rng) -> Layout {
    let angle = rng.gen_range(-PI..PI);
    let cx = rng.gen_range(-20.0..=20.0);
    let cy = rng.gen_range(-20.0..=20.0);
    let normal_angle = angle + PI / 2.0;
    let (nx, ny) = (normal_angle.cos(), normal_angle.sin());
    let dir = (angle.cos(), angle.sin());
    let half = 80.0;
    let mut lanes = Vec::new();
    for k in -1..=1 {
        let off = k as f64 * LANE_SPACING;
        let origin = (
            cx + nx * off - dir.0 * half,
            cy + ny * off - dir.1 * half,
        );
        lanes.push(Path::line(origin, angle, 2.0 * half));
    }
    let adjacency = vec![Some(1), Some(2), Some(1)];
    let boundaries = [-1.0, 1.0]
        .iter()
        .map(|side| {
            let off = side * (LANE_SPACING * 1.5);
            let origin = (
                cx + nx * off - dir.0 * half,
                cy + ny * off - dir.1 * half,
            );
            Path::line(origin, angle, 2.0 * half)
        })
        .collect();
    Layout {
        lanes,
        adjacency,
        boundaries,
        turn_lane: None,
        drivable: vec![0, 1, 2],
    }
}

fn build_curve(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig) -> Layout {
    let radius = rng.gen_range(cfg.curve_radius_min..=cfg.curve_radius_max);
    let center = (rng.gen_range(-20.0..=20.0), rng.gen_range(-20.0..=20.0));
    let theta0 = rng.gen_range(-PI..PI);
    let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let span = (160.0 / radius).min(2.2);
    let arc = |r: f64| Path {
        parts: vec![(
            Segment::Arc {
                center,
                radius: r,
                theta0,
                dir,
            },
            r * span,
        )],
    };
    let lanes = vec![arc(radius), arc(radius - LANE_SPACING)];
    let adjacency = vec![Some(1), Some(0)];
    let boundaries = vec![
        arc(radius + LANE_SPACING / 2.0),
        arc(radius - 1.5 * LANE_SPACING),
    ];
    Layout {
        lanes,
        adjacency,
        boundaries,
        turn_lane: None,
        drivable: vec![0, 1],
    }
}

fn build_intersection(rng: &mut ChaCha8Rng) -> Layout {
    let half = 80.0;
    let off = LANE_SPACING / 2.0;
    // Right-hand traffic: one lane per direction on two crossing roads.
    let lanes = vec![
        Path::line((-half, -off), 0.0, 2.0 * half),     // eastbound
        Path::line((half, off), PI, 2.0 * half),        // westbound
        Path::line((off, -half), PI / 2.0, 2.0 * half), // northbound
        Path::line((-off, half), -PI / 2.0, 2.0 * half), // southbound
    ];
    let mut layout = Layout {
        lanes,
        adjacency: vec![None; 4],
        boundaries: Vec::new(),
        turn_lane: None,
        drivable: vec![0, 1, 2, 3],
    };
    // Left turn from the eastbound lane into the northbound lane.
    let turn_radius = rng.gen_range(6.0..=10.0);
    let e_x = off - turn_radius;
    let incoming = half + e_x; // length from x=-half to the arc entry
    let arc_len = turn_radius * PI / 2.0;
    let exit_y = -off + turn_radius;
    let turn = Path {
        parts: vec![
            (
                Segment::Line {
                    origin: (-half, -off),
                    angle: 0.0,
                },
                incoming,
            ),
            (
                Segment::Arc {
                    center: (e_x, -off + turn_radius),
                    radius: turn_radius,
                    theta0: -PI / 2.0,
                    dir: 1.0,
                },
                arc_len,
            ),
            (
                Segment::Line {
                    origin: (off, exit_y),
                    angle: PI / 2.0,
                },
                half - exit_y,
            ),
        ],
    };
    layout.lanes.push(turn);
    layout.adjacency.push(None);
    layout.turn_lane = Some(layout.lanes.len() - 1);
    // Surrounding traffic may take the turn too; rare ego maneuvers then
    // have motion-data counterparts to learn from.
    layout.drivable.push(layout.lanes.len() - 1);
    layout
}

/// Longitudinal state advanced with exact constant-acceleration steps
/// (velocity clamps at zero mid-step when braking).
fn advance(s: f64, v: f64, a: f64, dt: f64) -> (f64, f64) {
    let v_next = v + a * dt;
    if v_next < 0.0 {
        let tau = if a.abs() > 0.0 { v / (-a) } else { 0.0 };
        (s + v * tau + 0.5 * a * tau * tau, 0.0)
    } else {
        (s + v * dt + 0.5 * a * dt * dt, v_next)
    }
}

struct MotionPlan {
    /// World pose (position, heading) per step index 0..TOTAL_STEPS.
    poses: Vec<((f64, f64), f64)>,
    /// Longitudinal speed per step index.
    speeds: Vec<f64>,
    /// Acceleration applied on each step.
    accels: Vec<f64>,
}

/// Roll an agent along its path. `accel_from` applies `accel` from that step
/// on; `blend` optionally morphs laterally onto a second path over
/// `[blend_start, blend_start + blend_steps)`.
#[allow(clippy::too_many_arguments)]
fn roll_path(
    path: &Path,
    s0: f64,
    v0: f64,
    accel: f64,
    accel_from: usize,
    blend: Option<&Path>,
    blend_start: usize,
    blend_steps: usize,
) -> MotionPlan {
    let mut s = s0;
    let mut v = v0;
    let mut stations = Vec::with_capacity(TOTAL_STEPS);
    let mut speeds = Vec::with_capacity(TOTAL_STEPS);
    let mut accels = Vec::with_capacity(TOTAL_STEPS);
    for i in 0..TOTAL_STEPS {
        stations.push(s);
        speeds.push(v);
        let a = if i >= accel_from { accel } else { 0.0 };
        accels.push(a);
        let (s_next, v_next) = advance(s, v, a, STEP_SECONDS);
        s = s_next;
        v = v_next;
    }
    let weight = |i: usize| -> f64 {
        if blend.is_none() || i < blend_start {
            0.0
        } else if i >= blend_start + blend_steps {
            1.0
        } else {
            let u = (i - blend_start) as f64 / blend_steps as f64;
            0.5 * (1.0 - (PI * u).cos())
        }
    };
    let pos_at = |i: usize| -> (f64, f64) {
        let p = path.point_at(stations[i]);
        match blend {
            Some(other) => {
                let w = weight(i);
                if w == 0.0 {
                    p
                } else {
                    let u = stations[i] / path.length();
                    let q = other.point_at(u * other.length());
                    (p.0 + w * (q.0 - p.0), p.1 + w * (q.1 - p.1))
                }
            }
            None => p,
        }
    };
    let mut poses = Vec::with_capacity(TOTAL_STEPS);
    for i in 0..TOTAL_STEPS {
        let p = pos_at(i);
        let heading = if blend.is_some() && weight(i) > 0.0 && weight(i) < 1.0 {
            // During a blend the heading follows the displacement.
            let q = if i + 1 < TOTAL_STEPS {
                pos_at(i + 1)
            } else {
                pos_at(i - 1)
            };
            let (dx, dy) = if i + 1 < TOTAL_STEPS {
                (q.0 - p.0, q.1 - p.1)
            } else {
                (p.0 - q.0, p.1 - q.1)
            };
            if dx.hypot(dy) > 1e-9 {
                dy.atan2(dx)
            } else {
                path.heading_at(stations[i])
            }
        } else if blend.is_some() && weight(i) >= 1.0 {
            blend.unwrap().heading_at(stations[i] / path.length() * blend.unwrap().length())
        } else {
            path.heading_at(stations[i])
        };
        poses.push((p, heading));
    }
    MotionPlan {
        poses,
        speeds,
        accels,
    }
}

fn draw_maneuver(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig) -> Maneuver {
    let mix = cfg.maneuver_mix.as_array();
    let total: f64 = mix.iter().sum();
    let mut u = rng.gen_range(0.0..total.max(f64::MIN_POSITIVE));
    let kinds = [
        Maneuver::KeepLane,
        Maneuver::Turn,
        Maneuver::LaneChange,
        Maneuver::Overtake,
        Maneuver::Stop,
    ];
    for (k, &w) in kinds.iter().zip(mix.iter()) {
        if u < w {
            return *k;
        }
        u -= w;
    }
    Maneuver::KeepLane
}

fn draw_layout(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig, maneuver: Maneuver) -> Layout {
    match maneuver {
        Maneuver::Turn => build_intersection(rng),
        Maneuver::LaneChange | Maneuver::Overtake => {
            let total = cfg.layout_straight + cfg.layout_curve;
            if total <= 0.0 || rng.gen_range(0.0..total) < cfg.layout_straight {
                build_straight(rng)
            } else {
                build_curve(rng, cfg)
            }
        }
        _ => {
            let total = cfg.layout_straight + cfg.layout_curve + cfg.layout_intersection;
            let mut u = rng.gen_range(0.0..total);
            if u < cfg.layout_straight {
                return build_straight(rng);
            }
            u -= cfg.layout_straight;
            if u < cfg.layout_curve {
                build_curve(rng, cfg)
            } else {
                build_intersection(rng)
            }
        }
    }
}

/// Plan one vehicle: pick the path realization matching its maneuver.
fn plan_vehicle(
    rng: &mut ChaCha8Rng,
    layout: &Layout,
    lane_idx: usize,
    maneuver: Maneuver,
    v0: f64,
    s0: f64,
) -> MotionPlan {
    let lane = &layout.lanes[lane_idx];
    match maneuver {
        Maneuver::KeepLane | Maneuver::Turn => {
            roll_path(lane, s0, v0, 0.0, TOTAL_STEPS, None, 0, 0)
        }
        Maneuver::Stop => {
            let decel = -(v0 / 2.0).max(0.5);
            roll_path(lane, s0, v0, decel, T0 - 1, None, 0, 0)
        }
        Maneuver::LaneChange => {
            let target = layout.adjacency[lane_idx].map(|j| &layout.lanes[j]);
            roll_path(lane, s0, v0, 0.0, TOTAL_STEPS, target, T0 - 1, 4)
        }
        Maneuver::Overtake => {
            let target = layout.adjacency[lane_idx].map(|j| &layout.lanes[j]);
            let accel = rng.gen_range(0.8..=1.6);
            roll_path(lane, s0, v0, accel, T0 - 1, target, T0 - 1, 4)
        }
    }
}

struct PlannedAgent {
    class: AgentClass,
    plan: MotionPlan,
}

fn world_clearance(a: &MotionPlan, b: &MotionPlan) -> f64 {
    (T0..TOTAL_STEPS)
        .map(|i| {
            let (pa, pb) = (a.poses[i].0, b.poses[i].0);
            (pa.0 - pb.0).hypot(pa.1 - pb.1)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Agent-local future via the full transform chain: express agent poses in
/// the per-step ego frame, then chain them back through the world into the
/// agent's t0 frame and rotate into the vehicle convention.
fn future_via_chain(agent: &MotionPlan, ego: &MotionPlan) -> Result<Vec<(f64, f64)>> {
    let mut boxes_ego = Vec::with_capacity(HORIZON_STEPS + 1);
    let mut ego_to_world = Vec::with_capacity(HORIZON_STEPS + 1);
    for i in T0..TOTAL_STEPS {
        let (ego_pos, ego_heading) = ego.poses[i];
        let e2w = RigidTransform::from_pose(&Pose::planar(ego_pos.0, ego_pos.1, ego_heading));
        let (apos, aheading) = agent.poses[i];
        let world_pose = Pose::planar(apos.0, apos.1, aheading);
        boxes_ego.push(e2w.inverse().apply_pose(&world_pose));
        ego_to_world.push(e2w);
    }
    let chain = transform_chain(&boxes_ego, &ego_to_world)?;
    Ok(chain[1..].iter().map(|&p| chain_to_vehicle_frame(p)).collect())
}

/// Generate one scene with its maneuver tag.
pub fn generate_record(seed: u64, cfg: &ScenarioConfig) -> Result<SceneRecord> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ego_maneuver = draw_maneuver(&mut rng, cfg);
    let layout = draw_layout(&mut rng, cfg, ego_maneuver);

    // Ego setup.
    let ego_speed = rng.gen_range(cfg.min_speed..=cfg.max_speed);
    let ego_lane = match ego_maneuver {
        Maneuver::Turn => layout.turn_lane.expect("intersection has a turn path"),
        Maneuver::LaneChange | Maneuver::Overtake => {
            let candidates: Vec<usize> = layout
                .drivable
                .iter()
                .copied()
                .filter(|&l| layout.adjacency[l].is_some())
                .collect();
            candidates[rng.gen_range(0..candidates.len())]
        }
        _ => layout.drivable[rng.gen_range(0..layout.drivable.len())],
    };
    let lane_len = layout.lanes[ego_lane].length();
    let ego_s0 = match ego_maneuver {
        Maneuver::Turn => {
            // Reach the arc shortly after t0.
            let incoming = layout.lanes[ego_lane].parts[0].1;
            (incoming - ego_speed * (HISTORY_STEPS as f64 * STEP_SECONDS + 0.75)).max(1.0)
        }
        _ => lane_len * rng.gen_range(0.25..=0.45),
    };
    let ego_plan = plan_vehicle(&mut rng, &layout, ego_lane, ego_maneuver, ego_speed, ego_s0);

    // Surrounding agents.
    let num_agents = rng.gen_range(cfg.min_agents..=cfg.max_agents);
    let mut planned: Vec<PlannedAgent> = Vec::new();
    for _ in 0..num_agents.saturating_sub(1) {
        let class_draw: f64 = rng.gen();
        let class = if class_draw < 0.7 {
            AgentClass::Vehicle
        } else if class_draw < 0.85 {
            AgentClass::Pedestrian
        } else {
            AgentClass::Cyclist
        };
        let mut placed = false;
        for _attempt in 0..40 {
            let plan = match class {
                AgentClass::Pedestrian => {
                    let angle = rng.gen_range(-PI..PI);
                    let offset = rng.gen_range(6.0..=12.0);
                    let anchor = layout.lanes[layout.drivable[0]]
                        .point_at(rng.gen_range(0.2..=0.8) * layout.lanes[layout.drivable[0]].length());
                    let normal_angle = angle + PI / 2.0;
                    let origin = (
                        anchor.0 + offset * normal_angle.cos(),
                        anchor.1 + offset * normal_angle.sin(),
                    );
                    let path = Path::line(origin, angle, 60.0);
                    let v = rng.gen_range(0.5..=1.5);
                    roll_path(&path, 10.0, v, 0.0, TOTAL_STEPS, None, 0, 0)
                }
                _ => {
                    let lane_idx = layout.drivable[rng.gen_range(0..layout.drivable.len())];
                    let lane = &layout.lanes[lane_idx];
                    let v = match class {
                        AgentClass::Cyclist => rng.gen_range(2.0..=6.0),
                        _ => rng.gen_range(cfg.min_speed..=cfg.max_speed),
                    };
                    let maneuver = {
                        let u: f64 = rng.gen();
                        if u < 0.10 && layout.adjacency[lane_idx].is_some() {
                            Maneuver::LaneChange
                        } else if u < 0.15 {
                            Maneuver::Stop
                        } else {
                            Maneuver::KeepLane
                        }
                    };
                    let s0 = lane.length() * rng.gen_range(0.05..=0.85);
                    plan_vehicle(&mut rng, &layout, lane_idx, maneuver, v, s0)
                }
            };
            let clear_of_ego = world_clearance(&plan, &ego_plan) >= CLEARANCE;
            if clear_of_ego {
                planned.push(PlannedAgent { class, plan });
                placed = true;
                break;
            }
        }
        if !placed {
            // A crowded draw; skip this agent rather than force a collision.
            continue;
        }
    }

    // Assemble agent records; ego is id 0 and listed first.
    let mut agents = Vec::with_capacity(planned.len() + 1);
    let ego_future = future_via_chain(&ego_plan, &ego_plan)?;
    let make_record = |id: u64,
                       class: AgentClass,
                       plan: &MotionPlan,
                       rng: &mut ChaCha8Rng|
     -> Result<AgentRecord> {
        let (pos, heading) = plan.poses[T0];
        let history: Vec<(f64, f64)> = (0..T0)
            .map(|i| {
                let (p, _) = plan.poses[i];
                (
                    p.0 + rng.gen_range(-1.0..=1.0) * cfg.history_noise,
                    p.1 + rng.gen_range(-1.0..=1.0) * cfg.history_noise,
                )
            })
            .collect();
        let future_gt = future_via_chain(plan, &ego_plan)?;
        Ok(AgentRecord {
            id,
            class,
            position: pos,
            heading,
            speed: plan.speeds[T0],
            history,
            future_gt,
        })
    };
    agents.push(make_record(0, AgentClass::Vehicle, &ego_plan, &mut rng)?);
    for (i, pa) in planned.iter().enumerate() {
        agents.push(make_record((i + 1) as u64, pa.class, &pa.plan, &mut rng)?);
    }

    // Map polylines: lanes plus boundaries.
    let mut map = Vec::new();
    for lane in &layout.lanes {
        map.push(MapPolyline::from_points(
            PolylineKind::LaneCenter,
            lane.sample_polyline(),
        )?);
    }
    for boundary in &layout.boundaries {
        map.push(MapPolyline::from_points(
            PolylineKind::Boundary,
            boundary.sample_polyline(),
        )?);
    }

    let ego_state_gt = EgoState {
        speed: ego_plan.speeds[T0],
        yaw_rate: normalize_angle(ego_plan.poses[T0 + 1].1 - ego_plan.poses[T0].1) / STEP_SECONDS,
        accel: ego_plan.accels[T0],
    };

    let scene = Scene {
        ego_id: 0,
        agents,
        map,
        ego_state_gt,
        ego_future_gt: ego_future,
    };
    scene.validate()?;
    Ok(SceneRecord::new(seed, ego_maneuver.tag().to_string(), scene))
}

/// Generate one scene (the record without its bookkeeping fields).
pub fn generate_scene(seed: u64, cfg: &ScenarioConfig) -> Result<Scene> {
    Ok(generate_record(seed, cfg)?.scene()?)
}
