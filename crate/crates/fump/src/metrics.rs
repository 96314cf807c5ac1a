//! Planning and motion evaluation: horizon L2 (SparseDrive-style
//! averaging), a disc-overlap collision surrogate, minADE, and the
//! cross-vehicle efficiency gain ratio.

use serde::{Deserialize, Serialize};

use crate::config::MetricRadii;
use crate::scene::{HORIZON_STEPS, STEP_SECONDS};
use crate::{Error, Result};

/// Values at the 1 s / 2 s / 3 s horizons plus their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizons {
    pub one_s: f64,
    pub two_s: f64,
    pub three_s: f64,
    pub avg: f64,
}

impl Horizons {
    pub fn zero() -> Self {
        Horizons {
            one_s: 0.0,
            two_s: 0.0,
            three_s: 0.0,
            avg: 0.0,
        }
    }

    fn from_parts(one_s: f64, two_s: f64, three_s: f64) -> Self {
        Horizons {
            one_s,
            two_s,
            three_s,
            avg: (one_s + two_s + three_s) / 3.0,
        }
    }
}

/// Mean-over-samples accumulator for horizon metrics.
#[derive(Debug, Default, Clone)]
pub struct HorizonAccumulator {
    sums: [f64; 3],
    count: usize,
}

impl HorizonAccumulator {
    pub fn push(&mut self, h: &Horizons) {
        self.sums[0] += h.one_s;
        self.sums[1] += h.two_s;
        self.sums[2] += h.three_s;
        self.count += 1;
    }

    pub fn mean(&self) -> Horizons {
        if self.count == 0 {
            return Horizons::zero();
        }
        let n = self.count as f64;
        Horizons::from_parts(self.sums[0] / n, self.sums[1] / n, self.sums[2] / n)
    }
}

fn steps_for_horizon(h: usize) -> usize {
    // 0.5 s steps: horizon h seconds covers the first 2h steps.
    ((h as f64 / STEP_SECONDS).round() as usize).min(HORIZON_STEPS)
}

/// Displacement error at the 1/2/3 s horizons. The value at horizon h is
/// the mean per-step error over all steps up to h.
pub fn l2_at_horizons(pred: &[(f64, f64)], gt: &[(f64, f64)]) -> Result<Horizons> {
    if pred.len() != HORIZON_STEPS || gt.len() != HORIZON_STEPS {
        return Err(Error::invalid(format!(
            "l2_at_horizons expects {HORIZON_STEPS}-step trajectories, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    let step_err: Vec<f64> = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (p.0 - g.0).hypot(p.1 - g.1))
        .collect();
    let upto = |h: usize| -> f64 {
        let k = steps_for_horizon(h);
        step_err[..k].iter().sum::<f64>() / k as f64
    };
    Ok(Horizons::from_parts(upto(1), upto(2), upto(3)))
}

/// Whether an ego trajectory collides by each horizon: any step up to the
/// horizon where the ego disc overlaps any agent disc at the same step.
/// All trajectories must share one frame.
pub fn collides_at_horizons(
    ego: &[(f64, f64)],
    agent_futures: &[Vec<(f64, f64)>],
    radii: &MetricRadii,
) -> [bool; 3] {
    let limit = radii.ego_radius + radii.agent_radius;
    let mut first_hit: Option<usize> = None;
    'outer: for (step, e) in ego.iter().enumerate() {
        for agent in agent_futures {
            if let Some(a) = agent.get(step) {
                if (e.0 - a.0).hypot(e.1 - a.1) < limit {
                    first_hit = Some(step);
                    break 'outer;
                }
            }
        }
    }
    match first_hit {
        None => [false; 3],
        Some(step) => {
            let mut out = [false; 3];
            for (i, h) in [1usize, 2, 3].iter().enumerate() {
                out[i] = step < steps_for_horizon(*h);
            }
            out
        }
    }
}

/// Collision rates (%) over a set of samples.
#[derive(Debug, Default, Clone)]
pub struct CollisionAccumulator {
    hits: [usize; 3],
    count: usize,
}

impl CollisionAccumulator {
    pub fn push(&mut self, collided: [bool; 3]) {
        for (h, c) in self.hits.iter_mut().zip(collided) {
            *h += c as usize;
        }
        self.count += 1;
    }

    pub fn rates_percent(&self) -> Horizons {
        if self.count == 0 {
            return Horizons::zero();
        }
        let n = self.count as f64;
        Horizons::from_parts(
            100.0 * self.hits[0] as f64 / n,
            100.0 * self.hits[1] as f64 / n,
            100.0 * self.hits[2] as f64 / n,
        )
    }
}

/// Best-of-K average displacement error.
pub fn min_ade(proposals: &[Vec<(f64, f64)>], gt: &[(f64, f64)]) -> Result<f64> {
    if proposals.is_empty() {
        return Err(Error::invalid("min_ade needs at least one proposal"));
    }
    let mut best = f64::INFINITY;
    for p in proposals {
        if p.len() != gt.len() {
            return Err(Error::invalid("proposal/gt length mismatch"));
        }
        let ade = p
            .iter()
            .zip(gt)
            .map(|(a, b)| (a.0 - b.0).hypot(a.1 - b.1))
            .sum::<f64>()
            / gt.len() as f64;
        best = best.min(ade);
    }
    Ok(best)
}

/// Cross-vehicle efficiency gain ratio (%):
/// `improvement × (1 − d_ego/d_total) × 100`, where improvement is the
/// relative gain of `acc` over `acc_base` (sign-flipped for lower-is-better
/// metrics so error reduction is positive).
pub fn cegr(
    acc: f64,
    acc_base: f64,
    d_ego: f64,
    d_total: f64,
    lower_is_better: bool,
) -> Result<f64> {
    if d_total == 0.0 {
        return Err(Error::invalid("cegr: d_total must be nonzero"));
    }
    if acc_base == 0.0 {
        return Err(Error::invalid("cegr: acc_base must be nonzero"));
    }
    if !(d_ego > 0.0 && d_ego <= d_total) {
        return Err(Error::invalid(format!(
            "cegr: need 0 < d_ego <= d_total, got {d_ego} / {d_total}"
        )));
    }
    let improvement = if lower_is_better {
        (acc_base - acc) / acc_base
    } else {
        (acc - acc_base) / acc_base
    };
    Ok(improvement * (1.0 - d_ego / d_total) * 100.0)
}

/// One labeled CEGR value in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CegrEntry {
    pub label: String,
    pub percent: f64,
}

/// Aggregated evaluation results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub l2: Horizons,
    pub collision_rate: Horizons,
    pub min_ade: f64,
    pub cegr: Vec<CegrEntry>,
    pub sample_count: usize,
    pub config_hash: u64,
}

impl EvalReport {
    /// Structured text form, one line per metric family.
    pub fn text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "samples: {}  (config {:#018x})\n",
            self.sample_count, self.config_hash
        ));
        out.push_str(&format!(
            "L2 (m):         1s {:.4}  2s {:.4}  3s {:.4}  avg {:.4}\n",
            self.l2.one_s, self.l2.two_s, self.l2.three_s, self.l2.avg
        ));
        out.push_str(&format!(
            "Col. rate (%):  1s {:.4}  2s {:.4}  3s {:.4}  avg {:.4}\n",
            self.collision_rate.one_s,
            self.collision_rate.two_s,
            self.collision_rate.three_s,
            self.collision_rate.avg
        ));
        out.push_str(&format!("minADE (m):     {:.4}\n", self.min_ade));
        for entry in &self.cegr {
            out.push_str(&format!("CEGR {}: {:.2}%\n", entry.label, entry.percent));
        }
        out
    }

    /// Machine-readable JSON record.
    pub fn json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Horizon→metric rows as CSV (for plotting).
    pub fn horizon_csv(&self) -> String {
        let mut out = String::from("horizon_s,l2_m,collision_rate_pct\n");
        for (h, l2, cr) in [
            (1.0, self.l2.one_s, self.collision_rate.one_s),
            (2.0, self.l2.two_s, self.collision_rate.two_s),
            (3.0, self.l2.three_s, self.collision_rate.three_s),
        ] {
            out.push_str(&format!("{h},{l2},{cr}\n"));
        }
        out
    }
}
