//! Fixed-capacity hard-sample queue with an EMA admission threshold.
//!
//! High-loss motion samples from each training batch are admitted when their
//! loss exceeds a threshold that tracks the batch mean loss by exponential
//! moving average. A full queue evicts its lowest-loss entry, and each
//! update ends with one uniformly random slot refreshed so hard samples keep
//! circulating as the network converges. Entries are detached values; no
//! gradients flow into stored memory.

use rand::Rng;

use crate::numerics::checkpoint::wire;
use crate::numerics::nn::mlp_forward;
use crate::numerics::{ParameterStore, Tape, Tensor, Val};
use crate::{Error, Result};

/// Queue serialization version inside the checkpoint container.
const QUEUE_WIRE_VERSION: u32 = 1;

/// One stored motion sample: its local-frame trajectory, the loss it scored
/// at admission time, and the (detached) stage-I query embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub trajectory: Vec<(f64, f64)>,
    pub loss: f64,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HardSampleQueue {
    entries: Vec<MemoryEntry>,
    capacity: usize,
    pub threshold: f64,
    pub gamma: f64,
}

/// EMA threshold update: `ε_t = γ·ε_prev + (1−γ)·batch_mean_loss`.
///
/// Computed with compensated products and sums so the result is the
/// correctly rounded value of the expression — each step is within one ulp
/// of the closed-form recurrence step.
pub fn update_threshold(threshold_prev: f64, batch_mean_loss: f64, gamma: f64) -> f64 {
    let (p1, e1) = two_product(gamma, threshold_prev);
    let (w, ew) = two_sum(1.0, -gamma);
    let (p2, e2) = two_product(w, batch_mean_loss);
    let (s, es) = two_sum(p1, p2);
    s + (es + e1 + e2 + ew * batch_mean_loss)
}

/// Exact product: returns (fl(a·b), error) with a·b = fl(a·b) + error.
fn two_product(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, f64::mul_add(a, b, -p))
}

/// Exact sum: returns (fl(a+b), error) with a+b = fl(a+b) + error.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bv = s - a;
    let err = (a - (s - bv)) + (b - bv);
    (s, err)
}

impl HardSampleQueue {
    pub fn new(capacity: usize, gamma: f64) -> Self {
        HardSampleQueue {
            entries: Vec::new(),
            capacity,
            threshold: 0.0,
            gamma,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    /// Fold the current batch mean loss into the admission threshold.
    pub fn update_threshold(&mut self, batch_mean_loss: f64) {
        self.threshold = update_threshold(self.threshold, batch_mean_loss, self.gamma);
    }

    /// Admit this batch's candidates.
    ///
    /// A candidate whose loss exceeds the threshold is appended while there
    /// is room; against a full queue it replaces the current minimum-loss
    /// entry only when it beats that minimum. Afterwards, if anything was
    /// admitted, one uniformly random slot is overwritten with the
    /// highest-loss candidate that was left out (skipped when every
    /// candidate made it in).
    pub fn batch_update(&mut self, candidates: &[MemoryEntry], rng: &mut impl Rng) {
        if self.capacity == 0 {
            return;
        }
        let mut admitted = vec![false; candidates.len()];
        let mut admitted_any = false;
        for (ci, cand) in candidates.iter().enumerate() {
            if !(cand.loss > self.threshold) {
                continue;
            }
            if self.entries.len() < self.capacity {
                self.entries.push(cand.clone());
                admitted[ci] = true;
                admitted_any = true;
            } else {
                let (min_idx, min_loss) = self
                    .entries
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.loss.partial_cmp(&b.1.loss).unwrap().then(a.0.cmp(&b.0)))
                    .map(|(i, e)| (i, e.loss))
                    .unwrap();
                if cand.loss > min_loss {
                    self.entries[min_idx] = cand.clone();
                    admitted[ci] = true;
                    admitted_any = true;
                }
            }
        }
        if admitted_any && !self.entries.is_empty() {
            let leftover = candidates
                .iter()
                .enumerate()
                .filter(|(ci, _)| !admitted[*ci])
                .max_by(|a, b| {
                    a.1.loss
                        .partial_cmp(&b.1.loss)
                        .unwrap()
                        .then(b.0.cmp(&a.0)) // ties to the earliest candidate
                });
            if let Some((_, replacement)) = leftover {
                let slot = rng.gen_range(0..self.entries.len());
                self.entries[slot] = replacement.clone();
            }
        }
    }

    /// Entry whose trajectory is closest (mean per-step L2) to the query
    /// trajectory; ties resolve to the earliest slot. `None` when empty.
    pub fn matched(&self, trajectory: &[(f64, f64)]) -> Option<&MemoryEntry> {
        let mut best: Option<(f64, usize)> = None;
        for (i, entry) in self.entries.iter().enumerate() {
            let d = mean_step_distance(&entry.trajectory, trajectory);
            match best {
                Some((bd, _)) if bd <= d => {}
                _ => best = Some((d, i)),
            }
        }
        best.map(|(_, i)| &self.entries[i])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        wire::put_u32(&mut out, QUEUE_WIRE_VERSION);
        wire::put_u64(&mut out, self.capacity as u64);
        wire::put_f64(&mut out, self.threshold);
        wire::put_f64(&mut out, self.gamma);
        wire::put_u64(&mut out, self.entries.len() as u64);
        for entry in &self.entries {
            wire::put_u64(&mut out, entry.trajectory.len() as u64);
            for p in &entry.trajectory {
                wire::put_f64(&mut out, p.0);
                wire::put_f64(&mut out, p.1);
            }
            wire::put_f64(&mut out, entry.loss);
            wire::put_u64(&mut out, entry.embedding.len() as u64);
            for v in &entry.embedding {
                wire::put_f64(&mut out, *v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = wire::Cursor::new(bytes);
        let version = cur.u32()?;
        if version != QUEUE_WIRE_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: QUEUE_WIRE_VERSION,
            });
        }
        let capacity = cur.u64()? as usize;
        let threshold = cur.f64()?;
        let gamma = cur.f64()?;
        let count = cur.u64()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let t = cur.u64()? as usize;
            let mut trajectory = Vec::with_capacity(t);
            for _ in 0..t {
                let x = cur.f64()?;
                let y = cur.f64()?;
                trajectory.push((x, y));
            }
            let loss = cur.f64()?;
            let e = cur.u64()? as usize;
            let embedding = cur.f64s(e)?;
            entries.push(MemoryEntry {
                trajectory,
                loss,
                embedding,
            });
        }
        Ok(HardSampleQueue {
            entries,
            capacity,
            threshold,
            gamma,
        })
    }
}

/// Mean per-step L2 distance between two equally long trajectories.
pub fn mean_step_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    assert_eq!(a.len(), b.len(), "trajectory lengths differ");
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(p, q)| (p.0 - q.0).hypot(p.1 - q.1))
        .sum();
    sum / a.len() as f64
}

/// Register the trajectory encoder ψ_e and the fusion MLP.
pub fn register_params(
    store: &mut ParameterStore,
    rng: &mut impl Rng,
    embed_dim: usize,
    hidden: usize,
    horizon: usize,
) -> Result<()> {
    use crate::numerics::nn::{register_mlp, MlpSpec};
    register_mlp(
        store,
        rng,
        "memory.psi",
        &MlpSpec::with_default_hidden(2 * horizon, hidden, embed_dim),
    )?;
    register_mlp(
        store,
        rng,
        "memory.fusion",
        &MlpSpec::with_default_hidden(2 * embed_dim, hidden, embed_dim),
    )?;
    Ok(())
}

/// Fuse a matched memory trajectory into the plan query row:
/// `Q_p' = Fusion([Q_p, ψ_e(flatten(τ*))])`.
pub fn fuse(
    tape: &mut Tape,
    store: &ParameterStore,
    q_row: Val,
    matched_trajectory: &[(f64, f64)],
) -> Result<Val> {
    let flat: Vec<f64> = matched_trajectory
        .iter()
        .flat_map(|p| [p.0, p.1])
        .collect();
    let traj = tape.constant(Tensor::from_rows(&[flat]));
    let psi = mlp_forward(tape, store, "memory.psi", traj)?;
    let joined = tape.concat_cols(&[q_row, psi]);
    mlp_forward(tape, store, "memory.fusion", joined)
}
