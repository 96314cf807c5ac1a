//! Long-tail curation: cluster ego futures with OPTICS and keep the scenes
//! falling in the k smallest clusters.

use serde::{Deserialize, Serialize};

use crate::datagen::io::SceneRecord;
use crate::datagen::optics::optics;

use crate::Result;

/// Default OPTICS neighborhood size for curation.
pub const CURATE_MIN_PTS: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurateReport {
    pub num_clusters: usize,
    pub cluster_sizes: Vec<usize>,
    pub selected_labels: Vec<i32>,
    pub noise_count: usize,
    pub threshold: f64,
    /// Set when fewer clusters exist than requested and every clustered
    /// scene was returned instead.
    pub warning: Option<String>,
}

/// Select the scenes whose ego-future clusters are the `k_smallest`
/// (ties between equal sizes resolve to the lower label). Noise points are
/// excluded. With fewer clusters than requested, all clustered scenes are
/// returned and the report carries a warning.
pub fn curate_longtail(
    records: &[SceneRecord],
    k_smallest: usize,
    min_pts: usize,
    max_eps: f64,
) -> Result<(Vec<SceneRecord>, CurateReport)> {
    let features: Vec<Vec<f64>> = records
        .iter()
        .map(|r| {
            let scene = r.scene()?;
            Ok(scene
                .ego_future_gt
                .iter()
                .flat_map(|p| [p.0, p.1])
                .collect())
        })
        .collect::<Result<_>>()?;
    let clusters = optics(&features, min_pts, max_eps)?;

    let mut order: Vec<(usize, i32)> = clusters
        .cluster_sizes
        .iter()
        .enumerate()
        .map(|(label, &size)| (size, label as i32))
        .collect();
    order.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));

    let (selected, warning) = if k_smallest == 0 {
        (Vec::new(), None)
    } else if order.len() < k_smallest {
        (
            order.iter().map(|&(_, l)| l).collect::<Vec<i32>>(),
            Some(format!(
                "requested {k_smallest} clusters but only {} exist; returning all clustered scenes",
                order.len()
            )),
        )
    } else {
        (
            order[..k_smallest].iter().map(|&(_, l)| l).collect(),
            None,
        )
    };

    let subset: Vec<SceneRecord> = records
        .iter()
        .zip(&clusters.labels)
        .filter(|(_, &label)| label >= 0 && selected.contains(&label))
        .map(|(r, _)| r.clone())
        .collect();
    let report = CurateReport {
        num_clusters: clusters.num_clusters(),
        cluster_sizes: clusters.cluster_sizes.clone(),
        selected_labels: selected,
        noise_count: clusters.noise_count(),
        threshold: clusters.threshold,
        warning,
    };
    Ok((subset, report))
}
