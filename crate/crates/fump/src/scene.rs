//! Vectorized scene model: agents, map polylines, attention-zone
//! partitioning, KNN subgraph construction and the rigid-invariant node and
//! edge features consumed by the encoder.
//!
//! Everything fed to the network is built from relative quantities —
//! distances, speed differences, arc lengths, turning angles — so the
//! encoder output cannot depend on the frame the scene happens to be
//! expressed in.

use crate::geometry::normalize_angle;
use crate::numerics::Tensor;
use crate::{Error, Result};

/// Future horizon in steps (0.5 s each, 3 s total).
pub const HORIZON_STEPS: usize = 6;
/// History length in steps.
pub const HISTORY_STEPS: usize = 4;
/// Timestep spacing in seconds (2 Hz).
pub const STEP_SECONDS: f64 = 0.5;
/// Number of attention zones.
pub const NUM_ZONES: usize = 4;
/// Node classes: three agent classes plus two map polyline kinds.
pub const NUM_NODE_CLASSES: usize = 5;
/// Sinusoidal distance encoding width (sin/cos pairs).
pub const DIST_ENCODING_PAIRS: usize = 8;
/// Width of the pre-MLP edge feature vector.
pub const EDGE_FEATURE_DIM: usize = 2 * DIST_ENCODING_PAIRS + 1 + 2 * NUM_NODE_CLASSES;
/// Width of the invariant node feature vector.
pub const NODE_FEATURE_DIM: usize = NUM_NODE_CLASSES + 1 + 2 * HISTORY_STEPS;
/// Width of the global-graph edge feature vector.
pub const GLOBAL_EDGE_FEATURE_DIM: usize = 2 * DIST_ENCODING_PAIRS + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum AgentClass {
    Vehicle,
    Pedestrian,
    Cyclist,
}

impl AgentClass {
    pub fn index(self) -> usize {
        match self {
            AgentClass::Vehicle => 0,
            AgentClass::Pedestrian => 1,
            AgentClass::Cyclist => 2,
        }
    }

    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            0 => Ok(AgentClass::Vehicle),
            1 => Ok(AgentClass::Pedestrian),
            2 => Ok(AgentClass::Cyclist),
            other => Err(Error::invalid(format!("unknown agent class id {other}"))),
        }
    }
}

/// One traffic participant. `history` holds the `HISTORY_STEPS` positions
/// before t0 (oldest first) in the scene frame; `future_gt` holds the
/// `HORIZON_STEPS` future positions in the agent's own t0 frame
/// (x right, y forward), anchored so that t0 is the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub id: u64,
    pub class: AgentClass,
    pub position: (f64, f64),
    pub heading: f64,
    pub speed: f64,
    pub history: Vec<(f64, f64)>,
    pub future_gt: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PolylineKind {
    LaneCenter,
    Boundary,
}

impl PolylineKind {
    /// Node class index; map kinds follow the three agent classes.
    pub fn class_index(self) -> usize {
        match self {
            PolylineKind::LaneCenter => 3,
            PolylineKind::Boundary => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapPolyline {
    pub kind: PolylineKind,
    pub points: Vec<(f64, f64)>,
    /// Tangent heading at each point.
    pub headings: Vec<f64>,
}

impl MapPolyline {
    /// Build from points, deriving per-point tangent headings from the
    /// segments. Requires at least two points with distinct neighbors.
    pub fn from_points(kind: PolylineKind, points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("polyline needs at least 2 points"));
        }
        for pair in points.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::invalid("polyline has consecutive duplicate points"));
            }
        }
        let mut headings = Vec::with_capacity(points.len());
        for i in 0..points.len() {
            let (a, b) = if i + 1 < points.len() {
                (points[i], points[i + 1])
            } else {
                (points[i - 1], points[i])
            };
            headings.push((b.1 - a.1).atan2(b.0 - a.0));
        }
        Ok(MapPolyline {
            kind,
            points,
            headings,
        })
    }

    pub fn arc_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|p| (p[1].0 - p[0].0).hypot(p[1].1 - p[0].1))
            .sum()
    }

    /// Point at the given arc length (clamped to the ends).
    pub fn point_at(&self, s: f64) -> (f64, f64) {
        if s <= 0.0 {
            return self.points[0];
        }
        let mut remaining = s;
        for pair in self.points.windows(2) {
            let seg = (pair[1].0 - pair[0].0).hypot(pair[1].1 - pair[0].1);
            if remaining <= seg {
                let f = remaining / seg;
                return (
                    pair[0].0 + f * (pair[1].0 - pair[0].0),
                    pair[0].1 + f * (pair[1].1 - pair[0].1),
                );
            }
            remaining -= seg;
        }
        *self.points.last().unwrap()
    }

    /// Anchor node position: the arc-length midpoint.
    pub fn midpoint(&self) -> (f64, f64) {
        self.point_at(0.5 * self.arc_length())
    }

    /// Tangent heading at the arc-length midpoint.
    pub fn midpoint_heading(&self) -> f64 {
        let mut remaining = 0.5 * self.arc_length();
        for pair in self.points.windows(2) {
            let seg = (pair[1].0 - pair[0].0).hypot(pair[1].1 - pair[0].1);
            if remaining <= seg {
                return (pair[1].1 - pair[0].1).atan2(pair[1].0 - pair[0].0);
            }
            remaining -= seg;
        }
        *self.headings.last().unwrap()
    }
}

/// Planning-specific ego state at t0.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EgoState {
    pub speed: f64,
    pub yaw_rate: f64,
    pub accel: f64,
}

impl EgoState {
    pub fn zero() -> Self {
        EgoState {
            speed: 0.0,
            yaw_rate: 0.0,
            accel: 0.0,
        }
    }

    pub fn as_vec(&self) -> Vec<f64> {
        vec![self.speed, self.yaw_rate, self.accel]
    }
}

/// One driving scene: the unit of training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ego_id: u64,
    pub agents: Vec<AgentRecord>,
    pub map: Vec<MapPolyline>,
    pub ego_state_gt: EgoState,
    /// Ego future in the ego t0 frame (x right, y forward).
    pub ego_future_gt: Vec<(f64, f64)>,
}

impl Scene {
    pub fn ego_index(&self) -> Result<usize> {
        self.agents
            .iter()
            .position(|a| a.id == self.ego_id)
            .ok_or_else(|| Error::invalid(format!("ego id {} not among agents", self.ego_id)))
    }

    pub fn ego(&self) -> Result<&AgentRecord> {
        Ok(&self.agents[self.ego_index()?])
    }

    pub fn validate(&self) -> Result<()> {
        self.ego_index()?;
        if self.ego_future_gt.len() != HORIZON_STEPS {
            return Err(Error::invalid(format!(
                "ego future horizon {} != {HORIZON_STEPS}",
                self.ego_future_gt.len()
            )));
        }
        for agent in &self.agents {
            if agent.history.len() != HISTORY_STEPS {
                return Err(Error::invalid(format!(
                    "agent {} history length {} != {HISTORY_STEPS}",
                    agent.id,
                    agent.history.len()
                )));
            }
            if agent.future_gt.len() != HORIZON_STEPS {
                return Err(Error::invalid(format!(
                    "agent {} future horizon {} != {HORIZON_STEPS}",
                    agent.id,
                    agent.future_gt.len()
                )));
            }
            if agent.speed < 0.0 {
                return Err(Error::invalid(format!("agent {} negative speed", agent.id)));
            }
            let finite = agent.position.0.is_finite()
                && agent.position.1.is_finite()
                && agent.history.iter().all(|p| p.0.is_finite() && p.1.is_finite())
                && agent.future_gt.iter().all(|p| p.0.is_finite() && p.1.is_finite());
            if !finite {
                return Err(Error::NonFinite(format!("agent {}", agent.id)));
            }
        }
        Ok(())
    }

    /// Lane-center polylines only.
    pub fn lane_centers(&self) -> impl Iterator<Item = &MapPolyline> {
        self.map
            .iter()
            .filter(|p| p.kind == PolylineKind::LaneCenter)
    }

    /// The scene under a global rigid transform: positions rotated by
    /// `angle` and translated, headings rotated. Agent-local futures and the
    /// ego state are frame-independent and stay untouched.
    pub fn rigidly_transformed(&self, angle: f64, translation: (f64, f64)) -> Scene {
        let (s, c) = angle.sin_cos();
        let map_pt = |p: (f64, f64)| (c * p.0 - s * p.1 + translation.0, s * p.0 + c * p.1 + translation.1);
        Scene {
            ego_id: self.ego_id,
            agents: self
                .agents
                .iter()
                .map(|a| AgentRecord {
                    id: a.id,
                    class: a.class,
                    position: map_pt(a.position),
                    heading: normalize_angle(a.heading + angle),
                    speed: a.speed,
                    history: a.history.iter().map(|&p| map_pt(p)).collect(),
                    future_gt: a.future_gt.clone(),
                })
                .collect(),
            map: self
                .map
                .iter()
                .map(|pl| MapPolyline {
                    kind: pl.kind,
                    points: pl.points.iter().map(|&p| map_pt(p)).collect(),
                    headings: pl.headings.iter().map(|&h| normalize_angle(h + angle)).collect(),
                })
                .collect(),
            ego_state_gt: self.ego_state_gt,
            ego_future_gt: self.ego_future_gt.clone(),
        }
    }
}

/// The four attention zones around the ego vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZoneId {
    Forward,
    LateralRight,
    LateralLeft,
    Rear,
}

impl ZoneId {
    pub const ALL: [ZoneId; NUM_ZONES] = [
        ZoneId::Forward,
        ZoneId::LateralRight,
        ZoneId::LateralLeft,
        ZoneId::Rear,
    ];

    pub fn index(self) -> usize {
        match self {
            ZoneId::Forward => 0,
            ZoneId::LateralRight => 1,
            ZoneId::LateralLeft => 2,
            ZoneId::Rear => 3,
        }
    }
}

/// Zone of a position relative to the ego pose.
///
/// The angle is measured counterclockwise from the ego's right-hand axis, so
/// the ego heading sits at +90°. Forward covers (30°, 150°], the right and
/// left lateral zones (−30°, 30°] and (150°, 210°], and the rear the rest;
/// the four half-open arcs tile the circle.
pub fn assign_zone(position: (f64, f64), ego_position: (f64, f64), ego_heading: f64) -> ZoneId {
    let (dx, dy) = (position.0 - ego_position.0, position.1 - ego_position.1);
    let (sin_h, cos_h) = ego_heading.sin_cos();
    // Components along the heading and the right-hand axis; both are
    // invariant under a global rotation of the scene.
    let forward = dx * cos_h + dy * sin_h;
    let right = dx * sin_h - dy * cos_h;
    let deg = forward.atan2(right).to_degrees(); // in (-180, 180]
    if deg > 30.0 && deg <= 150.0 {
        ZoneId::Forward
    } else if deg > -30.0 && deg <= 30.0 {
        ZoneId::LateralRight
    } else if deg > 150.0 || deg <= -150.0 {
        ZoneId::LateralLeft
    } else {
        ZoneId::Rear
    }
}

/// Sinusoidal encoding of a scalar distance: `DIST_ENCODING_PAIRS` octave
/// frequencies, sin/cos per octave.
pub fn encode_distance(d: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * DIST_ENCODING_PAIRS);
    for k in 0..DIST_ENCODING_PAIRS {
        let w = d / (2.0_f64).powi(k as i32);
        out.push(w.sin());
        out.push(w.cos());
    }
    out
}

/// A node of the scene graph: an agent or one map polyline.
#[derive(Debug, Clone)]
pub struct SceneNode {
    /// Position in the scene-wide node ordering (agents, then polylines).
    pub scene_index: usize,
    pub class_index: usize,
    pub position: (f64, f64),
    pub heading: f64,
    pub speed: f64,
    /// Rigid-invariant raw features (class one-hot, speed, motion-shape pairs).
    pub features: Vec<f64>,
}

/// One zone subgraph with KNN edges. Indices in `edges` are local to
/// `member_scene_indices`.
#[derive(Debug, Clone)]
pub struct Subgraph {
    pub zone: ZoneId,
    pub member_scene_indices: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    /// Pre-MLP edge features, one row per edge (empty tensor when no edges).
    pub edge_features: Tensor,
    /// Raw invariant node features, one row per member.
    pub node_features: Tensor,
    pub positions: Vec<(f64, f64)>,
    pub speeds: Vec<f64>,
}

/// The zone-partitioned scene graph.
#[derive(Debug, Clone)]
pub struct SceneGraph {
    pub nodes: Vec<SceneNode>,
    pub subgraphs: Vec<Subgraph>,
    /// Scene index of the ego node.
    pub ego_node: usize,
    /// Leading agent count in the node ordering (map nodes follow).
    pub num_agents: usize,
}

impl SceneGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// Invariant motion-shape descriptor of a point sequence: per-segment
/// (arc length, turning angle) pairs. The first segment's turn is measured
/// against `heading`; later turns between consecutive segments. Angles are
/// computed from dot/cross products, so a global rotation leaves them
/// unchanged.
pub fn motion_shape_pairs(points: &[(f64, f64)], heading: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * (points.len().saturating_sub(1)));
    let mut prev_dir: Option<(f64, f64)> = None;
    let head_vec = (heading.cos(), heading.sin());
    for pair in points.windows(2) {
        let d = (pair[1].0 - pair[0].0, pair[1].1 - pair[0].1);
        let len = d.0.hypot(d.1);
        let turn = if len <= 1e-12 {
            0.0
        } else {
            let reference = prev_dir.unwrap_or(head_vec);
            let cross = reference.0 * d.1 - reference.1 * d.0;
            let dot = reference.0 * d.0 + reference.1 * d.1;
            cross.atan2(dot)
        };
        out.push(len);
        out.push(turn);
        if len > 1e-12 {
            prev_dir = Some((d.0 / len, d.1 / len));
        }
    }
    out
}

fn agent_node(agent: &AgentRecord, scene_index: usize) -> SceneNode {
    let mut track: Vec<(f64, f64)> = agent.history.clone();
    track.push(agent.position);
    let mut features = vec![0.0; NUM_NODE_CLASSES];
    features[agent.class.index()] = 1.0;
    features.push(agent.speed);
    features.extend(motion_shape_pairs(&track, agent.heading));
    SceneNode {
        scene_index,
        class_index: agent.class.index(),
        position: agent.position,
        heading: agent.heading,
        speed: agent.speed,
        features,
    }
}

fn map_node(polyline: &MapPolyline, scene_index: usize) -> SceneNode {
    // Resample to HISTORY_STEPS+1 arc-length-uniform points so map nodes get
    // the same motion-shape feature layout as agents.
    let total = polyline.arc_length();
    let samples: Vec<(f64, f64)> = (0..=HISTORY_STEPS)
        .map(|i| polyline.point_at(total * i as f64 / HISTORY_STEPS as f64))
        .collect();
    let heading = polyline.midpoint_heading();
    let mut features = vec![0.0; NUM_NODE_CLASSES];
    features[polyline.kind.class_index()] = 1.0;
    features.push(0.0); // map nodes carry zero speed
    features.extend(motion_shape_pairs(&samples, heading));
    SceneNode {
        scene_index,
        class_index: polyline.kind.class_index(),
        position: polyline.midpoint(),
        heading,
        speed: 0.0,
        features,
    }
}

/// Pre-MLP edge feature vector between two nodes:
/// `[encode(‖c_i − c_j‖), speed_i − speed_j, onehot(cls_i), onehot(cls_j)]`.
/// Identical under any rigid transform of the whole scene.
pub fn edge_feature_vector(node_i: &SceneNode, node_j: &SceneNode) -> Vec<f64> {
    let dist = (node_i.position.0 - node_j.position.0).hypot(node_i.position.1 - node_j.position.1);
    let mut out = encode_distance(dist);
    out.push(node_i.speed - node_j.speed);
    let mut one_hot = vec![0.0; 2 * NUM_NODE_CLASSES];
    one_hot[node_i.class_index] = 1.0;
    one_hot[NUM_NODE_CLASSES + node_j.class_index] = 1.0;
    out.extend(one_hot);
    out
}

/// Partition the scene into the four zone subgraphs and connect each node to
/// its `k` nearest neighbors within the zone (ties by lower scene index).
/// Map polylines become one node each at their arc-length midpoint with zero
/// speed. The ego node is assigned to the Forward zone by convention.
pub fn build_subgraphs(scene: &Scene, k_neighbors: usize) -> Result<SceneGraph> {
    if k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors must be >= 1"));
    }
    if scene.agents.is_empty() {
        return Err(Error::invalid("empty scene: no agents"));
    }
    scene.validate()?;
    let ego_index = scene.ego_index()?;
    let ego_pos = scene.agents[ego_index].position;
    let ego_heading = scene.agents[ego_index].heading;

    let mut nodes = Vec::with_capacity(scene.agents.len() + scene.map.len());
    for (i, agent) in scene.agents.iter().enumerate() {
        nodes.push(agent_node(agent, i));
    }
    for (i, polyline) in scene.map.iter().enumerate() {
        nodes.push(map_node(polyline, scene.agents.len() + i));
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); NUM_ZONES];
    for node in &nodes {
        let zone = if node.scene_index == ego_index {
            ZoneId::Forward
        } else {
            assign_zone(node.position, ego_pos, ego_heading)
        };
        members[zone.index()].push(node.scene_index);
    }

    let mut subgraphs = Vec::with_capacity(NUM_ZONES);
    for (zi, zone) in ZoneId::ALL.iter().enumerate() {
        let member_idx = &members[zi];
        let n = member_idx.len();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for (li, &si) in member_idx.iter().enumerate() {
            let mut candidates: Vec<(f64, usize, usize)> = member_idx
                .iter()
                .enumerate()
                .filter(|(lj, _)| *lj != li)
                .map(|(lj, &sj)| {
                    let d = (nodes[si].position.0 - nodes[sj].position.0)
                        .hypot(nodes[si].position.1 - nodes[sj].position.1);
                    (d, sj, lj)
                })
                .collect();
            candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            for &(_, _, lj) in candidates.iter().take(k_neighbors.min(n.saturating_sub(1))) {
                edges.push((li, lj));
            }
        }
        let node_features = Tensor::from_rows(
            &member_idx
                .iter()
                .map(|&si| nodes[si].features.clone())
                .collect::<Vec<_>>(),
        );
        let node_features = if n == 0 {
            Tensor::zeros(&[0, NODE_FEATURE_DIM])
        } else {
            node_features
        };
        let edge_features = if edges.is_empty() {
            Tensor::zeros(&[0, EDGE_FEATURE_DIM])
        } else {
            Tensor::from_rows(
                &edges
                    .iter()
                    .map(|&(li, lj)| {
                        edge_feature_vector(&nodes[member_idx[li]], &nodes[member_idx[lj]])
                    })
                    .collect::<Vec<_>>(),
            )
        };
        subgraphs.push(Subgraph {
            zone: *zone,
            member_scene_indices: member_idx.clone(),
            edges,
            edge_features,
            node_features,
            positions: member_idx.iter().map(|&si| nodes[si].position).collect(),
            speeds: member_idx.iter().map(|&si| nodes[si].speed).collect(),
        });
    }

    Ok(SceneGraph {
        nodes,
        subgraphs,
        ego_node: ego_index,
        num_agents: scene.agents.len(),
    })
}

/// Velocity vector of a node (speed along heading).
pub fn velocity_vector(node: &SceneNode) -> (f64, f64) {
    (node.speed * node.heading.cos(), node.speed * node.heading.sin())
}

/// Map a point from an agent's local frame (x right, y forward) into the
/// scene frame given the agent pose.
pub fn vehicle_to_scene_frame(
    local: (f64, f64),
    position: (f64, f64),
    heading: f64,
) -> (f64, f64) {
    let (sin_h, cos_h) = heading.sin_cos();
    let right = (sin_h, -cos_h);
    let forward = (cos_h, sin_h);
    (
        position.0 + local.0 * right.0 + local.1 * forward.0,
        position.1 + local.0 * right.1 + local.1 * forward.1,
    )
}

/// Map a scene-frame point into an agent's local frame (x right, y forward).
pub fn scene_to_vehicle_frame(
    point: (f64, f64),
    position: (f64, f64),
    heading: f64,
) -> (f64, f64) {
    let (dx, dy) = (point.0 - position.0, point.1 - position.1);
    let (sin_h, cos_h) = heading.sin_cos();
    (dx * sin_h - dy * cos_h, dx * cos_h + dy * sin_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    fn agent(id: u64, pos: (f64, f64), heading: f64, speed: f64) -> AgentRecord {
        AgentRecord {
            id,
            class: AgentClass::Vehicle,
            position: pos,
            heading,
            speed,
            history: (1..=HISTORY_STEPS)
                .rev()
                .map(|i| {
                    (
                        pos.0 - heading.cos() * speed * STEP_SECONDS * i as f64,
                        pos.1 - heading.sin() * speed * STEP_SECONDS * i as f64,
                    )
                })
                .collect(),
            future_gt: (1..=HORIZON_STEPS)
                .map(|i| (0.0, speed * STEP_SECONDS * i as f64))
                .collect(),
        }
    }

    fn simple_scene(num_agents: usize) -> Scene {
        let agents: Vec<AgentRecord> = (0..num_agents)
            .map(|i| {
                agent(
                    i as u64,
                    (3.0 * i as f64, 10.0 + 2.0 * i as f64),
                    0.4 * i as f64,
                    2.0 + i as f64,
                )
            })
            .collect();
        let map = vec![MapPolyline::from_points(
            PolylineKind::LaneCenter,
            vec![(0.0, 0.0), (0.0, 30.0), (5.0, 60.0)],
        )
        .unwrap()];
        Scene {
            ego_id: 0,
            agents,
            map,
            ego_state_gt: EgoState {
                speed: 2.0,
                yaw_rate: 0.0,
                accel: 0.0,
            },
            ego_future_gt: (1..=HORIZON_STEPS)
                .map(|i| (0.0, STEP_SECONDS * 2.0 * i as f64))
                .collect(),
        }
    }

    #[test]
    fn zone_of_cardinal_directions() {
        let ego = (2.0, 3.0);
        let heading = PI / 3.0;
        let ahead = (ego.0 + heading.cos(), ego.1 + heading.sin());
        assert_eq!(assign_zone(ahead, ego, heading), ZoneId::Forward);
        let right = (ego.0 + heading.sin(), ego.1 - heading.cos());
        assert_eq!(assign_zone(right, ego, heading), ZoneId::LateralRight);
        let behind = (ego.0 - heading.cos(), ego.1 - heading.sin());
        assert_eq!(assign_zone(behind, ego, heading), ZoneId::Rear);
        let left = (ego.0 - heading.sin(), ego.1 + heading.cos());
        assert_eq!(assign_zone(left, ego, heading), ZoneId::LateralLeft);
    }

    #[test]
    fn zones_partition_every_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let heading = rng.gen_range(-PI..PI);
            let angle = rng.gen_range(-PI..PI);
            let pos = (angle.cos() * 5.0, angle.sin() * 5.0);
            // assign_zone is total: any direction lands in exactly one zone.
            let _ = assign_zone(pos, (0.0, 0.0), heading);
        }
    }

    #[test]
    fn two_nodes_in_one_zone_connect_to_each_other() {
        let mut scene = simple_scene(1);
        // Put the lone map polyline ahead of the ego so both nodes share the
        // Forward zone.
        scene.map = vec![MapPolyline::from_points(
            PolylineKind::LaneCenter,
            vec![(0.1, 15.0), (0.1, 25.0)],
        )
        .unwrap()];
        scene.agents[0].heading = PI / 2.0;
        let graph = build_subgraphs(&scene, 3).unwrap();
        let forward = &graph.subgraphs[0];
        assert_eq!(forward.member_scene_indices.len(), 2);
        assert_eq!(forward.edges.len(), 2);
        assert!(forward.edges.contains(&(0, 1)));
        assert!(forward.edges.contains(&(1, 0)));
    }

    #[test]
    fn knn_tie_breaks_by_lower_index() {
        // Ego at origin heading +y; three collinear nodes ahead at
        // y = 10, 11, 12. With k=1, the middle connects to the nearer, and a
        // tie (equidistant endpoints) resolves to the lower scene index.
        let mut scene = simple_scene(4);
        scene.agents[0].heading = PI / 2.0;
        scene.agents[0].position = (0.0, 0.0);
        scene.agents[1].position = (0.0, 10.0);
        scene.agents[2].position = (0.0, 11.0);
        scene.agents[3].position = (0.0, 12.0);
        scene.map.clear();
        let graph = build_subgraphs(&scene, 1).unwrap();
        let forward = &graph.subgraphs[0];
        // local indices: ego=0, a1=1, a2=2, a3=3
        let middle_edge = forward
            .edges
            .iter()
            .find(|(src, _)| forward.member_scene_indices[*src] == 2)
            .unwrap();
        assert_eq!(forward.member_scene_indices[middle_edge.1], 1);

        // Brute-force check of all KNN choices.
        for &(src, dst) in &forward.edges {
            let si = forward.member_scene_indices[src];
            let sj = forward.member_scene_indices[dst];
            let d_chosen = (graph.nodes[si].position.0 - graph.nodes[sj].position.0)
                .hypot(graph.nodes[si].position.1 - graph.nodes[sj].position.1);
            for &other in &forward.member_scene_indices {
                if other == si || other == sj {
                    continue;
                }
                let d_other = (graph.nodes[si].position.0 - graph.nodes[other].position.0)
                    .hypot(graph.nodes[si].position.1 - graph.nodes[other].position.1);
                assert!(
                    d_chosen < d_other || (d_chosen == d_other && sj < other),
                    "node {si}: chose {sj} ({d_chosen}) over {other} ({d_other})"
                );
            }
        }
    }

    #[test]
    fn subgraph_node_counts_partition_the_scene() {
        for n in 1..6 {
            let scene = simple_scene(n);
            let graph = build_subgraphs(&scene, 4).unwrap();
            let total: usize = graph
                .subgraphs
                .iter()
                .map(|s| s.member_scene_indices.len())
                .sum();
            assert_eq!(total, scene.agents.len() + scene.map.len());
        }
    }

    #[test]
    fn empty_scene_is_an_error() {
        let scene = Scene {
            ego_id: 0,
            agents: vec![],
            map: vec![],
            ego_state_gt: EgoState::zero(),
            ego_future_gt: vec![(0.0, 0.0); HORIZON_STEPS],
        };
        assert!(build_subgraphs(&scene, 4).is_err());
    }

    #[test]
    fn edge_features_at_zero_distance_and_equal_speed() {
        let a = agent(0, (1.0, 1.0), 0.0, 3.0);
        let node_a = agent_node(&a, 0);
        let mut b = agent(1, (1.0, 1.0), 0.0, 3.0);
        b.class = AgentClass::Vehicle;
        let node_b = agent_node(&b, 1);
        let r = edge_feature_vector(&node_a, &node_b);
        let enc_zero = encode_distance(0.0);
        assert_eq!(&r[..2 * DIST_ENCODING_PAIRS], enc_zero.as_slice());
        assert_eq!(r[2 * DIST_ENCODING_PAIRS], 0.0);
    }

    #[test]
    fn edge_features_are_directional_in_speed() {
        let a = agent_node(&agent(0, (0.0, 0.0), 0.0, 3.0), 0);
        let b = agent_node(&agent(1, (5.0, 0.0), 0.0, 1.0), 1);
        let r_ab = edge_feature_vector(&a, &b);
        let r_ba = edge_feature_vector(&b, &a);
        assert_eq!(r_ab[2 * DIST_ENCODING_PAIRS], 2.0);
        assert_eq!(r_ba[2 * DIST_ENCODING_PAIRS], -2.0);
    }

    #[test]
    fn edge_features_invariant_under_rigid_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let mut scene = simple_scene(rng.gen_range(2..6));
            // Generic positions: exact distance ties would make the KNN
            // ordering legitimately frame-sensitive.
            for a in &mut scene.agents {
                a.position.0 += rng.gen_range(-1.0..1.0);
                a.position.1 += rng.gen_range(-1.0..1.0);
            }
            let angle = rng.gen_range(-PI..PI);
            let t = (rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
            let moved = scene.rigidly_transformed(angle, t);
            let g0 = build_subgraphs(&scene, 4).unwrap();
            let g1 = build_subgraphs(&moved, 4).unwrap();
            for (s0, s1) in g0.subgraphs.iter().zip(&g1.subgraphs) {
                assert_eq!(s0.member_scene_indices, s1.member_scene_indices);
                assert_eq!(s0.edges, s1.edges);
                let max_delta = s0
                    .edge_features
                    .data()
                    .iter()
                    .zip(s1.edge_features.data())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max);
                assert!(max_delta <= 1e-9, "edge feature drift {max_delta}");
                let node_delta = s0
                    .node_features
                    .data()
                    .iter()
                    .zip(s1.node_features.data())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max);
                assert!(node_delta <= 1e-9, "node feature drift {node_delta}");
            }
        }
    }

    #[test]
    fn knn_is_deterministic() {
        let scene = simple_scene(5);
        let g0 = build_subgraphs(&scene, 2).unwrap();
        let g1 = build_subgraphs(&scene, 2).unwrap();
        for (a, b) in g0.subgraphs.iter().zip(&g1.subgraphs) {
            assert_eq!(a.edges, b.edges);
        }
    }

    #[test]
    fn vehicle_frame_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let pos = (rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
            let heading = rng.gen_range(-PI..PI);
            let p = (rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
            let local = scene_to_vehicle_frame(p, pos, heading);
            let back = vehicle_to_scene_frame(local, pos, heading);
            assert!((back.0 - p.0).abs() < 1e-9 && (back.1 - p.1).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_point_is_positive_y_in_vehicle_frame() {
        let heading = 0.7_f64;
        let pos = (3.0_f64, 4.0_f64);
        let ahead = (pos.0 + 2.0 * heading.cos(), pos.1 + 2.0 * heading.sin());
        let local = scene_to_vehicle_frame(ahead, pos, heading);
        assert!(local.0.abs() < 1e-12);
        assert!((local.1 - 2.0).abs() < 1e-12);
    }
}
