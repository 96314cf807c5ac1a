//! Line-delimited dataset serialization.
//!
//! One self-describing JSON record per line with a schema version field.
//! Floats round-trip exactly (shortest-representation decimal encoding), so
//! write→read is bitwise lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scene::{
    AgentClass, AgentRecord, EgoState, MapPolyline, PolylineKind, Scene,
};
use crate::{Error, Result};

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AgentJson {
    id: u64,
    class: u8,
    heading: f64,
    speed: f64,
    position: [f64; 2],
    history: Vec<[f64; 2]>,
    future_local: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PolylineJson {
    kind: String,
    points: Vec<[f64; 2]>,
}

/// One dataset line: a scene plus its bookkeeping fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub version: u32,
    pub scene_id: u64,
    pub ego_id: u64,
    pub ego_state: EgoState,
    agents: Vec<AgentJson>,
    map: Vec<PolylineJson>,
    pub maneuver_tag: String,
}

impl SceneRecord {
    pub fn new(scene_id: u64, maneuver_tag: String, scene: Scene) -> Self {
        SceneRecord {
            version: DATASET_VERSION,
            scene_id,
            ego_id: scene.ego_id,
            ego_state: scene.ego_state_gt,
            agents: scene
                .agents
                .iter()
                .map(|a| AgentJson {
                    id: a.id,
                    class: a.class.index() as u8,
                    heading: a.heading,
                    speed: a.speed,
                    position: [a.position.0, a.position.1],
                    history: a.history.iter().map(|p| [p.0, p.1]).collect(),
                    future_local: a.future_gt.iter().map(|p| [p.0, p.1]).collect(),
                })
                .collect(),
            map: scene
                .map
                .iter()
                .map(|pl| PolylineJson {
                    kind: match pl.kind {
                        PolylineKind::LaneCenter => "lane-center".to_string(),
                        PolylineKind::Boundary => "boundary".to_string(),
                    },
                    points: pl.points.iter().map(|p| [p.0, p.1]).collect(),
                })
                .collect(),
            maneuver_tag,
        }
    }

    /// Reconstruct the in-memory scene. The ego's future is its own
    /// `future_local` (both live in the ego t0 frame).
    pub fn scene(&self) -> Result<Scene> {
        let agents: Vec<AgentRecord> = self
            .agents
            .iter()
            .map(|a| {
                Ok(AgentRecord {
                    id: a.id,
                    class: AgentClass::from_index(a.class)?,
                    position: (a.position[0], a.position[1]),
                    heading: a.heading,
                    speed: a.speed,
                    history: a.history.iter().map(|p| (p[0], p[1])).collect(),
                    future_gt: a.future_local.iter().map(|p| (p[0], p[1])).collect(),
                })
            })
            .collect::<Result<_>>()?;
        let map: Vec<MapPolyline> = self
            .map
            .iter()
            .map(|pl| {
                let kind = match pl.kind.as_str() {
                    "lane-center" => PolylineKind::LaneCenter,
                    "boundary" => PolylineKind::Boundary,
                    other => {
                        return Err(Error::invalid(format!("unknown polyline kind `{other}`")))
                    }
                };
                MapPolyline::from_points(kind, pl.points.iter().map(|p| (p[0], p[1])).collect())
            })
            .collect::<Result<_>>()?;
        let ego_future_gt = self
            .agents
            .iter()
            .find(|a| a.id == self.ego_id)
            .map(|a| a.future_local.iter().map(|p| (p[0], p[1])).collect())
            .ok_or_else(|| Error::invalid(format!("ego id {} not among agents", self.ego_id)))?;
        let scene = Scene {
            ego_id: self.ego_id,
            agents,
            map,
            ego_state_gt: self.ego_state,
            ego_future_gt,
        };
        scene.validate()?;
        Ok(scene)
    }
}

pub fn write_dataset(records: &[SceneRecord], path: &Path) -> Result<()> {
    let ctx = || format!("writing dataset {}", path.display());
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::invalid(format!("serializing scene {}: {e}", record.scene_id)))?;
        writeln!(w, "{line}").map_err(|e| Error::io(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<SceneRecord>> {
    let ctx = || format!("reading dataset {}", path.display());
    let file = File::open(path).map_err(|e| Error::io(ctx(), e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(ctx(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SceneRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if record.version != DATASET_VERSION {
            return Err(Error::VersionMismatch {
                found: record.version,
                expected: DATASET_VERSION,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Scenes only, dropping the bookkeeping fields.
pub fn scenes_of(records: &[SceneRecord]) -> Result<Vec<Scene>> {
    records.iter().map(|r| r.scene()).collect()
}
