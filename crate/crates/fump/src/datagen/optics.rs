//! OPTICS density ordering with a reachability flat cut.
//!
//! Core distance of a point is the distance to its `min_pts`-th nearest
//! other point (infinite beyond `max_eps`); reachability of a point from an
//! expanding core point is the larger of that core distance and the pair
//! distance. Processing is index-ordered and min-heap ties break toward the
//! lower index, so the ordering is fully deterministic. Clusters are
//! extracted with a DBSCAN-equivalent cut at a threshold chosen as the 75th
//! percentile of finite reachabilities.

use crate::{Error, Result};

/// Raw OPTICS pass: ordering plus reachability/core-distance per point.
#[derive(Debug, Clone)]
pub struct OpticsRun {
    pub ordering: Vec<usize>,
    /// Reachability per point index; `f64::INFINITY` where undefined.
    pub reachability: Vec<f64>,
    pub core_distance: Vec<f64>,
}

/// Flat-cut clustering labels derived from an OPTICS run.
#[derive(Debug, Clone)]
pub struct ClusterResult {
    /// Per-point label; −1 is noise.
    pub labels: Vec<i32>,
    pub ordering: Vec<usize>,
    pub reachability: Vec<f64>,
    pub core_distance: Vec<f64>,
    /// Size of each cluster, indexed by label.
    pub cluster_sizes: Vec<usize>,
    /// The reachability threshold used for extraction.
    pub threshold: f64,
}

impl ClusterResult {
    pub fn num_clusters(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l < 0).count()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The OPTICS ordering pass.
pub fn optics_run(points: &[Vec<f64>], min_pts: usize, max_eps: f64) -> Result<OpticsRun> {
    let n = points.len();
    if min_pts == 0 {
        return Err(Error::invalid("min_pts must be >= 1"));
    }
    if n < min_pts {
        return Err(Error::invalid(format!(
            "need at least min_pts={min_pts} points, got {n}"
        )));
    }
    // Dense pairwise distances; quadratic is fine at curation scale.
    let dist = |i: usize, j: usize| euclidean(&points[i], &points[j]);

    let mut core_distance = vec![f64::INFINITY; n];
    for i in 0..n {
        let mut ds: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist(i, j)).collect();
        ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = ds[min_pts - 1];
        if d <= max_eps {
            core_distance[i] = d;
        }
    }

    let mut processed = vec![false; n];
    let mut reachability = vec![f64::INFINITY; n];
    let mut ordering = Vec::with_capacity(n);
    // Seed list: candidate reachabilities for unprocessed points.
    let mut seeds: Vec<Option<f64>> = vec![None; n];

    let update = |p: usize,
                  seeds: &mut Vec<Option<f64>>,
                  processed: &[bool],
                  core_distance: &[f64]| {
        if !core_distance[p].is_finite() {
            return;
        }
        for q in 0..n {
            if processed[q] || q == p {
                continue;
            }
            let d = dist(p, q);
            if d > max_eps {
                continue;
            }
            let new_reach = core_distance[p].max(d);
            match seeds[q] {
                Some(r) if r <= new_reach => {}
                _ => seeds[q] = Some(new_reach),
            }
        }
    };

    for start in 0..n {
        if processed[start] {
            continue;
        }
        processed[start] = true;
        ordering.push(start);
        update(start, &mut seeds, &processed, &core_distance);
        loop {
            // Pop the seed with minimal (reachability, index).
            let mut best: Option<(f64, usize)> = None;
            for (q, r) in seeds.iter().enumerate() {
                if let Some(r) = r {
                    match best {
                        Some((br, _)) if br <= *r => {}
                        _ => best = Some((*r, q)),
                    }
                }
            }
            let Some((r, q)) = best else { break };
            seeds[q] = None;
            processed[q] = true;
            reachability[q] = r;
            ordering.push(q);
            update(q, &mut seeds, &processed, &core_distance);
        }
    }
    Ok(OpticsRun {
        ordering,
        reachability,
        core_distance,
    })
}

/// Nearest-rank 75th percentile of the finite reachabilities (0 when none).
pub fn flat_cut_threshold(reachability: &[f64]) -> f64 {
    let mut finite: Vec<f64> = reachability.iter().copied().filter(|r| r.is_finite()).collect();
    if finite.is_empty() {
        return 0.0;
    }
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((0.75 * finite.len() as f64).ceil() as usize).clamp(1, finite.len());
    finite[rank - 1]
}

/// DBSCAN-equivalent label extraction at a fixed reachability threshold.
///
/// Walking the ordering, a point with reachability above the cut starts a
/// new provisional cluster when it is core at the cut. The raw walk
/// fragments a cluster wherever the plot pokes above the line (a percentile
/// cut guarantees such points exist), so two repairs give the cut exact
/// DBSCAN semantics at the threshold: provisional clusters whose core
/// points lie within the threshold of each other are merged
/// (density-connected fragments are one cluster), and every non-core point
/// is assigned to its nearest core within the threshold (ties to the lower
/// index) or to noise.
pub fn extract_clusters(points: &[Vec<f64>], run: &OpticsRun, threshold: f64) -> Vec<i32> {
    let n = run.ordering.len();
    let is_core: Vec<bool> = run
        .core_distance
        .iter()
        .map(|&c| c <= threshold)
        .collect();
    let mut labels = vec![-1i32; n];
    let mut cluster: i32 = -1;
    for &p in &run.ordering {
        if !is_core[p] {
            continue;
        }
        if run.reachability[p] > threshold || cluster < 0 {
            cluster += 1;
        }
        labels[p] = cluster;
    }
    if cluster < 0 {
        return labels;
    }

    // Union provisional fragments that are density-connected at the cut.
    let mut parent: Vec<usize> = (0..=cluster as usize).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for p in 0..n {
        if !is_core[p] {
            continue;
        }
        for q in (p + 1)..n {
            if !is_core[q] || euclidean(&points[p], &points[q]) > threshold {
                continue;
            }
            let (rp, rq) = (
                find(&mut parent, labels[p] as usize),
                find(&mut parent, labels[q] as usize),
            );
            if rp != rq {
                parent[rp.max(rq)] = rp.min(rq);
            }
        }
    }
    for p in 0..n {
        if labels[p] >= 0 {
            labels[p] = find(&mut parent, labels[p] as usize) as i32;
        }
    }

    // Border rule: nearest core within the threshold claims the point.
    for p in 0..n {
        if is_core[p] {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for q in 0..n {
            if q == p || !is_core[q] {
                continue;
            }
            let d = euclidean(&points[p], &points[q]);
            if d > threshold {
                continue;
            }
            match best {
                Some((bd, bq)) if (bd, bq) <= (d, q) => {}
                _ => best = Some((d, q)),
            }
        }
        labels[p] = match best {
            Some((_, q)) => labels[q],
            None => -1,
        };
    }

    // Compact label ids by first occurrence in index order.
    canonical_labels(&labels)
}

/// Full pipeline: ordering pass, 75th-percentile cut, label extraction.
pub fn optics(points: &[Vec<f64>], min_pts: usize, max_eps: f64) -> Result<ClusterResult> {
    let run = optics_run(points, min_pts, max_eps)?;
    let threshold = flat_cut_threshold(&run.reachability);
    let labels = extract_clusters(points, &run, threshold);
    let num_clusters = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0)) as usize;
    let mut cluster_sizes = vec![0usize; num_clusters];
    for &l in &labels {
        if l >= 0 {
            cluster_sizes[l as usize] += 1;
        }
    }
    Ok(ClusterResult {
        labels,
        ordering: run.ordering,
        reachability: run.reachability,
        core_distance: run.core_distance,
        cluster_sizes,
        threshold,
    })
}

/// Brute-force DBSCAN used as the reference implementation. Core points
/// have at least `min_pts` other points within `eps`; clusters are the
/// connected components of cores (grown breadth-first from the
/// lowest-index unvisited core); a non-core point joins the cluster of its
/// nearest core within `eps` (ties to the lower index) or stays noise.
pub fn dbscan_reference(points: &[Vec<f64>], min_pts: usize, eps: f64) -> Vec<i32> {
    let n = points.len();
    let dist = |i: usize, j: usize| euclidean(&points[i], &points[j]);
    let is_core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && dist(i, j) <= eps).count() >= min_pts)
        .collect();
    let mut labels = vec![-1i32; n];
    let mut cluster = -1i32;
    for start in 0..n {
        if labels[start] >= 0 || !is_core[start] {
            continue;
        }
        cluster += 1;
        let mut queue = vec![start];
        labels[start] = cluster;
        while let Some(p) = queue.pop() {
            for q in 0..n {
                if q == p || !is_core[q] || dist(p, q) > eps {
                    continue;
                }
                if labels[q] < 0 {
                    labels[q] = cluster;
                    queue.push(q);
                }
            }
        }
    }
    for p in 0..n {
        if is_core[p] {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for q in 0..n {
            if q == p || !is_core[q] {
                continue;
            }
            let d = dist(p, q);
            if d > eps {
                continue;
            }
            match best {
                Some((bd, bq)) if (bd, bq) <= (d, q) => {}
                _ => best = Some((d, q)),
            }
        }
        labels[p] = match best {
            Some((_, q)) => labels[q],
            None => -1,
        };
    }
    labels
}

/// Canonicalize labels by first occurrence in index order (noise stays −1),
/// so label numbering conventions can be compared across algorithms.
pub fn canonical_labels(labels: &[i32]) -> Vec<i32> {
    let mut mapping: Vec<(i32, i32)> = Vec::new();
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                return -1;
            }
            if let Some(&(_, m)) = mapping.iter().find(|(orig, _)| *orig == l) {
                m
            } else {
                let m = next;
                mapping.push((l, m));
                next += 1;
                m
            }
        })
        .collect()
}
