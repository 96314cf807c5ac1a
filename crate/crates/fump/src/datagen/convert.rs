//! Ego-frame annotation conversion: per-frame object boxes observed in the
//! ego coordinate system become per-track local-frame motion trajectories by
//! chaining ego→world and world→target transforms, anchored at each track's
//! first appearance.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{transform_chain, Pose, RigidTransform};
use crate::{Error, Result};

pub const CONVERSION_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl PoseJson {
    fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.z, self.yaw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxAnnotation {
    pub track_id: u64,
    pub pose: PoseJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub t: f64,
    /// Ego pose in the world frame; optional in the schema so a missing
    /// pose can be reported by frame.
    pub ego_pose: Option<PoseJson>,
    #[serde(default)]
    pub boxes: Vec<BoxAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationInput {
    pub frames: Vec<FrameAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    pub track_id: u64,
    /// Local-frame (x, y) per observed frame, anchored at the first one.
    pub trajectory: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionOutput {
    pub version: u32,
    pub tracks: Vec<TrackOutput>,
}

/// Convert parsed annotations. Tracks are emitted sorted by id; a track seen
/// in a single frame yields just its origin point.
pub fn convert_annotation_input(input: &AnnotationInput) -> Result<ConversionOutput> {
    let mut track_ids: Vec<u64> = input
        .frames
        .iter()
        .flat_map(|f| f.boxes.iter().map(|b| b.track_id))
        .collect();
    track_ids.sort_unstable();
    track_ids.dedup();

    let mut tracks = Vec::with_capacity(track_ids.len());
    for id in track_ids {
        let mut boxes_ego = Vec::new();
        let mut ego_to_world = Vec::new();
        for frame in &input.frames {
            let Some(b) = frame.boxes.iter().find(|b| b.track_id == id) else {
                continue;
            };
            let ego = frame.ego_pose.as_ref().ok_or_else(|| {
                Error::invalid(format!("frame t={}: missing ego pose", frame.t))
            })?;
            boxes_ego.push(b.pose.pose());
            ego_to_world.push(RigidTransform::from_pose(&ego.pose()));
        }
        let chain = transform_chain(&boxes_ego, &ego_to_world)?;
        tracks.push(TrackOutput {
            track_id: id,
            trajectory: chain.iter().map(|p| [p.0, p.1]).collect(),
        });
    }
    Ok(ConversionOutput {
        version: CONVERSION_VERSION,
        tracks,
    })
}

/// File-to-file conversion.
pub fn convert_annotations(input_path: &Path, output_path: &Path) -> Result<ConversionOutput> {
    let file = File::open(input_path)
        .map_err(|e| Error::io(format!("reading annotations {}", input_path.display()), e))?;
    let input: AnnotationInput = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::invalid(format!("parsing {}: {e}", input_path.display())))?;
    let output = convert_annotation_input(&input)?;
    let out = File::create(output_path)
        .map_err(|e| Error::io(format!("writing {}", output_path.display()), e))?;
    let mut w = BufWriter::new(out);
    serde_json::to_writer(&mut w, &output)
        .map_err(|e| Error::invalid(format!("serializing conversion output: {e}")))?;
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", output_path.display()), e))?;
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::normalize_angle;

    fn pose_json(x: f64, y: f64, yaw: f64) -> PoseJson {
        PoseJson { x, y, z: 0.0, yaw }
    }

    #[test]
    fn single_frame_track_is_just_the_origin() {
        let input = AnnotationInput {
            frames: vec![FrameAnnotation {
                t: 0.0,
                ego_pose: Some(pose_json(5.0, 5.0, 0.3)),
                boxes: vec![BoxAnnotation {
                    track_id: 7,
                    pose: pose_json(2.0, 1.0, 0.1),
                }],
            }],
        };
        let out = convert_annotation_input(&input).unwrap();
        assert_eq!(out.tracks.len(), 1);
        assert_eq!(out.tracks[0].trajectory, vec![[0.0, 0.0]]);
    }

    #[test]
    fn missing_ego_pose_names_the_frame() {
        let input = AnnotationInput {
            frames: vec![
                FrameAnnotation {
                    t: 0.0,
                    ego_pose: Some(pose_json(0.0, 0.0, 0.0)),
                    boxes: vec![BoxAnnotation {
                        track_id: 1,
                        pose: pose_json(1.0, 0.0, 0.0),
                    }],
                },
                FrameAnnotation {
                    t: 0.5,
                    ego_pose: None,
                    boxes: vec![BoxAnnotation {
                        track_id: 1,
                        pose: pose_json(2.0, 0.0, 0.0),
                    }],
                },
            ],
        };
        let err = convert_annotation_input(&input).unwrap_err();
        assert!(err.to_string().contains("t=0.5"), "{err}");
    }

    #[test]
    fn co_moving_object_reflects_world_motion_not_zeros() {
        // Object rigidly attached to a moving ego: its ego-frame pose never
        // changes, yet the converted local trajectory must show the shared
        // world motion. Oracle: simulate the world paths directly.
        let dt = 0.5;
        let speed = 4.0;
        let frames: Vec<FrameAnnotation> = (0..7)
            .map(|i| {
                let t = i as f64 * dt;
                FrameAnnotation {
                    t,
                    ego_pose: Some(pose_json(speed * t, 0.0, 0.0)),
                    boxes: vec![BoxAnnotation {
                        track_id: 3,
                        // 2 m ahead of the ego, in the ego frame, always.
                        pose: pose_json(2.0, 0.0, 0.0),
                    }],
                }
            })
            .collect();
        let out = convert_annotation_input(&AnnotationInput { frames }).unwrap();
        let traj = &out.tracks[0].trajectory;
        for (i, p) in traj.iter().enumerate() {
            // World path: x = 2 + speed*t; local frame anchored at first
            // frame heading +x → x' advances by speed*t.
            let expect = speed * dt * i as f64;
            assert!(
                (p[0] - expect).abs() < 1e-9 && p[1].abs() < 1e-9,
                "step {i}: {p:?} vs ({expect}, 0)"
            );
        }
    }

    #[test]
    fn synthetic_world_paths_match_geometry_oracle() {
        // Known world trajectories for ego and object; the converter output
        // must equal a direct world→target mapping within 1e-9.
        let dt = 0.5;
        let mut frames = Vec::new();
        let mut world_poses = Vec::new();
        for i in 0..8 {
            let t = i as f64 * dt;
            let obj_world = Pose::planar(3.0 + 2.0 * t, 1.0 + 0.5 * t * t, 0.2 * t);
            let ego_world = Pose::planar(-1.0 + 3.0 * t, 0.3 * t, 0.1 + 0.05 * t);
            let e2w = RigidTransform::from_pose(&ego_world);
            let in_ego = e2w.inverse().apply_pose(&obj_world);
            frames.push(FrameAnnotation {
                t,
                ego_pose: Some(pose_json(ego_world.x, ego_world.y, ego_world.yaw)),
                boxes: vec![BoxAnnotation {
                    track_id: 11,
                    pose: pose_json(in_ego.x, in_ego.y, in_ego.yaw),
                }],
            });
            world_poses.push(obj_world);
        }
        let out = convert_annotation_input(&AnnotationInput { frames }).unwrap();
        let psi = normalize_angle(world_poses[0].yaw);
        let anchor = Pose::new(world_poses[0].x, world_poses[0].y, 0.0, psi);
        let direct = RigidTransform::world_to_target(&anchor);
        for (i, p) in out.tracks[0].trajectory.iter().enumerate() {
            let expect = direct.apply_planar((world_poses[i].x, world_poses[i].y));
            assert!((p[0] - expect.0).abs() < 1e-9);
            assert!((p[1] - expect.1).abs() < 1e-9);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join("fump_convert_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let in_path = dir.join("in.json");
        let out_path = dir.join("out.json");
        let input = AnnotationInput {
            frames: vec![FrameAnnotation {
                t: 0.0,
                ego_pose: Some(pose_json(0.0, 0.0, 0.0)),
                boxes: vec![BoxAnnotation {
                    track_id: 1,
                    pose: pose_json(1.0, 1.0, 0.0),
                }],
            }],
        };
        std::fs::write(&in_path, serde_json::to_string(&input).unwrap()).unwrap();
        let out = convert_annotations(&in_path, &out_path).unwrap();
        let text = std::fs::read_to_string(&out_path).unwrap();
        let parsed: ConversionOutput = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, out);
        std::fs::remove_file(&in_path).ok();
        std::fs::remove_file(&out_path).ok();
    }
}
