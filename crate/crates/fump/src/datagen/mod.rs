//! Deterministic synthetic scenarios, dataset serialization, ego-frame
//! annotation conversion and OPTICS-based long-tail curation.

mod convert;
mod curate;
mod generator;
mod io;
mod optics;

pub use convert::{convert_annotations, AnnotationInput, BoxAnnotation, FrameAnnotation, TrackOutput};
pub use curate::{curate_longtail, CurateReport, CURATE_MIN_PTS};
pub use generator::{generate_record, generate_scene, Maneuver};
pub use io::{read_dataset, scenes_of, write_dataset, SceneRecord, DATASET_VERSION};
pub use optics::{
    canonical_labels, dbscan_reference, extract_clusters, flat_cut_threshold, optics,
    ClusterResult, OpticsRun,
};

/// Rotate a transform-chain output point (heading → +x) into the vehicle
/// frame used for stored trajectories (x right, y forward).
pub fn chain_to_vehicle_frame(p: (f64, f64)) -> (f64, f64) {
    (-p.1, p.0)
}
