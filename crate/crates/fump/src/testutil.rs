//! Shared scene builders for unit tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scene::{
    AgentClass, AgentRecord, EgoState, MapPolyline, PolylineKind, Scene, HISTORY_STEPS,
    HORIZON_STEPS, STEP_SECONDS,
};

const PI: f64 = std::f64::consts::PI;

pub fn random_agent(rng: &mut ChaCha8Rng, id: u64) -> AgentRecord {
    let heading = rng.gen_range(-PI..PI);
    let speed = rng.gen_range(0.0..12.0);
    let position = (rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0));
    let history = (1..=HISTORY_STEPS)
        .rev()
        .map(|i| {
            (
                position.0 - heading.cos() * speed * STEP_SECONDS * i as f64
                    + rng.gen_range(-0.1..0.1),
                position.1 - heading.sin() * speed * STEP_SECONDS * i as f64
                    + rng.gen_range(-0.1..0.1),
            )
        })
        .collect();
    AgentRecord {
        id,
        class: match id % 3 {
            0 => AgentClass::Vehicle,
            1 => AgentClass::Pedestrian,
            _ => AgentClass::Cyclist,
        },
        position,
        heading,
        speed,
        history,
        future_gt: (1..=HORIZON_STEPS)
            .map(|i| (0.0, speed * STEP_SECONDS * i as f64))
            .collect(),
    }
}

pub fn random_scene(rng: &mut ChaCha8Rng, num_agents: usize) -> Scene {
    let agents: Vec<AgentRecord> = (0..num_agents).map(|i| random_agent(rng, i as u64)).collect();
    let mut map = Vec::new();
    for _ in 0..rng.gen_range(1..4) {
        let x0 = rng.gen_range(-30.0..30.0);
        let y0 = rng.gen_range(-30.0..30.0);
        let ang = rng.gen_range(-PI..PI);
        let pts: Vec<(f64, f64)> = (0..5)
            .map(|i| {
                (
                    x0 + ang.cos() * 8.0 * i as f64,
                    y0 + ang.sin() * 8.0 * i as f64,
                )
            })
            .collect();
        let kind = if rng.gen_bool(0.5) {
            PolylineKind::LaneCenter
        } else {
            PolylineKind::Boundary
        };
        map.push(MapPolyline::from_points(kind, pts).unwrap());
    }
    Scene {
        ego_id: 0,
        agents,
        map,
        ego_state_gt: EgoState {
            speed: 3.0,
            yaw_rate: 0.0,
            accel: 0.0,
        },
        ego_future_gt: (1..=HORIZON_STEPS)
            .map(|i| (0.0, 3.0 * STEP_SECONDS * i as f64))
            .collect(),
    }
}
