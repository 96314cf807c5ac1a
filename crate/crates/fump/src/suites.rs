//! Executable verification suites: equivariance, gradients, geometry and
//! memory laws. `fump check` runs them from the command line and the
//! acceptance tests assert on their outcomes; both print one line per case.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ModelConfig, ScenarioConfig, TrainConfig};
use crate::datagen::generate_scene;
use crate::ecsa::ecsa_forward;
use crate::geometry::{transform_chain, Pose, RigidTransform};
use crate::memory::{update_threshold, HardSampleQueue, MemoryEntry};
use crate::numerics::{finite_diff_check, CoordSampling, ParameterStore, Tape};
use crate::scene::{Scene, HORIZON_STEPS};
use crate::trainer::build_store;
use crate::uttd::{
    history_encoding, motion_loss, pseudo_plan_gt_local, stage1_decode, stage1_plan_loss,
    stage2_refine, state_constant, state_predictor, state_predictor_loss, HORIZON_SECONDS,
};
use crate::Result;

const PI: f64 = std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: String,
    pub cases: Vec<CaseResult>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for case in &self.cases {
            out.push_str(&format!(
                "[{}] {} / {}: {}\n",
                if case.passed { "pass" } else { "FAIL" },
                self.name,
                case.name,
                case.detail
            ));
        }
        out.push_str(&format!(
            "[{}] {} suite ({:.2} s)\n",
            if self.passed() { "pass" } else { "FAIL" },
            self.name,
            self.elapsed.as_secs_f64()
        ));
        out
    }
}

fn case(name: &str, passed: bool, detail: String) -> CaseResult {
    CaseResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn random_rigid(rng: &mut ChaCha8Rng) -> (f64, (f64, f64)) {
    (
        rng.gen_range(-PI..=PI),
        (rng.gen_range(-100.0..=100.0), rng.gen_range(-100.0..=100.0)),
    )
}

/// Encoder invariance: 100 random scenes × 10 random rigid transforms; the
/// max deviation of node embeddings must stay within 1e-9.
pub fn equivariance_suite() -> Result<SuiteReport> {
    let started = Instant::now();
    let cfg = ModelConfig::default();
    let mut init_rng = ChaCha8Rng::seed_from_u64(2024);
    let mut store = ParameterStore::new();
    crate::ecsa::register_params(&mut store, &mut init_rng, &cfg)?;

    let scenario = ScenarioConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut max_delta = 0.0_f64;
    for seed in 0..100u64 {
        let scene = generate_scene(seed, &scenario)?;
        let mut base_tape = Tape::new();
        let base = ecsa_forward(&mut base_tape, &store, &scene, &cfg)?;
        let base_vals = base_tape.value(base.embeddings).data().to_vec();
        for _ in 0..10 {
            let (angle, t) = random_rigid(&mut rng);
            let moved = scene.rigidly_transformed(angle, t);
            let mut tape = Tape::new();
            let out = ecsa_forward(&mut tape, &store, &moved, &cfg)?;
            let delta = tape
                .value(out.embeddings)
                .data()
                .iter()
                .zip(&base_vals)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            max_delta = max_delta.max(delta);
        }
    }
    let elapsed = started.elapsed();
    Ok(SuiteReport {
        name: "equivariance".into(),
        cases: vec![
            case(
                "embedding-invariance",
                max_delta <= 1e-9,
                format!("max |delta| = {max_delta:.3e} (tolerance 1e-9)"),
            ),
            case(
                "runtime",
                elapsed <= Duration::from_secs(120),
                format!("{:.1} s (budget 120 s)", elapsed.as_secs_f64()),
            ),
        ],
        elapsed,
    })
}

/// The full training loss for one scene: encoder, stage-I motion and plan
/// losses, memory fusion, stage-II refinement and the state predictor.
/// Populates gradients and returns the scalar value.
pub fn full_pipeline_loss(
    cfg: &TrainConfig,
    store: &mut ParameterStore,
    scene: &Scene,
    queue: &HardSampleQueue,
) -> Result<f64> {
    let mut tape = Tape::new();
    let embeddings = ecsa_forward(&mut tape, store, scene, &cfg.model)?;
    let stage1 = stage1_decode(&mut tape, store, &embeddings, &cfg.model)?;
    let ego_idx = scene.ego_index()?;

    let mut terms = Vec::new();
    let mut motion_losses = Vec::new();
    for (i, agent) in scene.agents.iter().enumerate() {
        if i == ego_idx {
            continue;
        }
        motion_losses.push(motion_loss(
            &mut tape,
            &stage1.agent_decodes[i],
            &agent.future_gt,
            cfg.model.num_modes,
        )?);
    }
    if !motion_losses.is_empty() {
        let stacked = tape.concat_rows(&motion_losses);
        let mean = tape.mean_all(stacked);
        terms.push((mean, cfg.weights.motion));
    }

    let pseudo = pseudo_plan_gt_local(scene, HORIZON_SECONDS)?;
    let plan1 = stage1_plan_loss(
        &mut tape,
        &stage1.plan_decode,
        &pseudo,
        &scene.ego_future_gt,
        cfg.hinge_distance,
        cfg.model.num_modes,
    )?;
    terms.push((plan1, cfg.weights.stage1_plan));

    let plan_q = stage1.plan_query_row(&mut tape);
    let matched = queue.entries().first().map(|e| e.trajectory.as_slice());
    let state = state_constant(&mut tape, &scene.ego_state_gt);
    let refined = stage2_refine(
        &mut tape,
        store,
        plan_q,
        state,
        &stage1.plan_decode,
        matched,
        cfg.model.num_modes,
    )?;
    let plan2 = motion_loss(&mut tape, &refined, &scene.ego_future_gt, cfg.model.num_modes)?;
    terms.push((plan2, cfg.weights.stage2_plan));

    let ego = scene.ego()?;
    let predicted = state_predictor(&mut tape, store, plan_q, &history_encoding(ego))?;
    let stp = state_predictor_loss(&mut tape, predicted, &scene.ego_state_gt);
    terms.push((stp, cfg.weights.state_predictor));

    let mut total = None;
    for (term, weight) in terms {
        let scaled = tape.scale(term, weight);
        total = Some(match total {
            Some(acc) => tape.add(acc, scaled),
            None => scaled,
        });
    }
    let total = total.expect("loss terms present");
    let value = tape.scalar_value(total);
    tape.backward(total, store)?;
    Ok(value)
}

/// Analytic vs central-difference gradients of the full pipeline loss on
/// 3-agent scenes: 10 seeds, sampled coordinates, tolerance 1e-5.
pub fn gradient_suite() -> Result<SuiteReport> {
    let started = Instant::now();
    let scenario = ScenarioConfig {
        min_agents: 3,
        max_agents: 3,
        ..ScenarioConfig::default()
    };
    let mut worst = 0.0_f64;
    for seed in 0..10u64 {
        let mut cfg = TrainConfig::default();
        cfg.seed = seed;
        // Smaller dims keep the sweep brisk without changing the math.
        cfg.model.embed_dim = 24;
        cfg.model.hidden_width = 24;
        let mut store = build_store(&cfg)?;
        let scene = generate_scene(1000 + seed, &scenario)?;
        let mut queue = HardSampleQueue::new(4, 0.2);
        queue.threshold = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        queue.batch_update(
            &[MemoryEntry {
                trajectory: (1..=HORIZON_STEPS)
                    .map(|i| (0.1 * i as f64, 0.4 * i as f64))
                    .collect(),
                loss: 1.0,
                embedding: vec![0.0; cfg.model.embed_dim],
            }],
            &mut rng,
        );
        let cfg_ref = cfg.clone();
        let queue_ref = queue.clone();
        let scene_ref = scene.clone();
        let err = finite_diff_check(
            move |store| full_pipeline_loss(&cfg_ref, store, &scene_ref, &queue_ref),
            &mut store,
            1e-6,
            &CoordSampling::Random {
                count: 24,
                seed: 77 + seed,
            },
        )?;
        worst = worst.max(err);
    }
    let elapsed = started.elapsed();
    Ok(SuiteReport {
        name: "gradients".into(),
        cases: vec![
            case(
                "finite-difference",
                worst <= 1e-5,
                format!("max relative error = {worst:.3e} (tolerance 1e-5)"),
            ),
            case(
                "runtime",
                elapsed <= Duration::from_secs(300),
                format!("{:.1} s (budget 300 s)", elapsed.as_secs_f64()),
            ),
        ],
        elapsed,
    })
}

/// Transform-chain laws on 1000 random chains: world round trips, exact t0
/// anchoring, and invariance to the choice of world frame.
pub fn geometry_suite() -> Result<SuiteReport> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut max_round_trip = 0.0_f64;
    let mut max_anchor = 0.0_f64;
    let mut max_frame_delta = 0.0_f64;
    for _ in 0..1000 {
        let steps = rng.gen_range(2..=8);
        let mut boxes = Vec::with_capacity(steps);
        let mut egos = Vec::with_capacity(steps);
        for _ in 0..steps {
            boxes.push(Pose::planar(
                rng.gen_range(-60.0..=60.0),
                rng.gen_range(-60.0..=60.0),
                rng.gen_range(-PI..=PI),
            ));
            egos.push(RigidTransform::from_yaw_translation(
                rng.gen_range(-PI..=PI),
                (rng.gen_range(-60.0..=60.0), rng.gen_range(-60.0..=60.0), 0.0),
            ));
        }
        let out = transform_chain(&boxes, &egos)?;
        max_anchor = max_anchor.max(out[0].0.abs()).max(out[0].1.abs());

        // Round trip through a random target frame.
        let pose = Pose::planar(
            rng.gen_range(-100.0..=100.0),
            rng.gen_range(-100.0..=100.0),
            rng.gen_range(-PI..=PI),
        );
        let t = RigidTransform::world_to_target(&pose);
        let p = (
            rng.gen_range(-100.0..=100.0),
            rng.gen_range(-100.0..=100.0),
            0.0,
        );
        let back = t.inverse().apply(t.apply(p));
        max_round_trip = max_round_trip.max((back.0 - p.0).hypot(back.1 - p.1));

        // A change of world frame must not change the chain output.
        let (angle, translation) = random_rigid(&mut rng);
        let g = RigidTransform::from_yaw_translation(angle, (translation.0, translation.1, 0.0));
        let moved: Vec<RigidTransform> = egos.iter().map(|e| g.compose(e)).collect();
        let out2 = transform_chain(&boxes, &moved)?;
        for (a, b) in out.iter().zip(&out2) {
            max_frame_delta = max_frame_delta.max((a.0 - b.0).hypot(a.1 - b.1));
        }
    }
    let elapsed = started.elapsed();
    Ok(SuiteReport {
        name: "geometry".into(),
        cases: vec![
            case(
                "round-trip",
                max_round_trip <= 1e-9,
                format!("max error = {max_round_trip:.3e} m (tolerance 1e-9)"),
            ),
            case(
                "t0-anchor",
                max_anchor <= 1e-12,
                format!("max |output[0]| = {max_anchor:.3e} m (tolerance 1e-12)"),
            ),
            case(
                "world-frame-invariance",
                max_frame_delta <= 1e-9,
                format!("max delta = {max_frame_delta:.3e} m (tolerance 1e-9)"),
            ),
            case(
                "runtime",
                elapsed <= Duration::from_secs(30),
                format!("{:.1} s (budget 30 s)", elapsed.as_secs_f64()),
            ),
        ],
        elapsed,
    })
}

/// Independent reimplementation of the queue update semantics, driven by a
/// cloned RNG, used as the oracle for the law checks.
fn queue_update_oracle(
    entries: &mut Vec<MemoryEntry>,
    capacity: usize,
    threshold: f64,
    candidates: &[MemoryEntry],
    rng: &mut ChaCha8Rng,
) {
    if capacity == 0 {
        return;
    }
    let mut admitted = vec![false; candidates.len()];
    let mut any = false;
    for (i, c) in candidates.iter().enumerate() {
        if !(c.loss > threshold) {
            continue;
        }
        if entries.len() < capacity {
            entries.push(c.clone());
            admitted[i] = true;
            any = true;
        } else {
            let mut min_idx = 0;
            for (j, e) in entries.iter().enumerate() {
                if e.loss < entries[min_idx].loss {
                    min_idx = j;
                }
            }
            if c.loss > entries[min_idx].loss {
                entries[min_idx] = c.clone();
                admitted[i] = true;
                any = true;
            }
        }
    }
    if any && !entries.is_empty() {
        let mut best: Option<usize> = None;
        for (i, c) in candidates.iter().enumerate() {
            if admitted[i] {
                continue;
            }
            match best {
                Some(b) if candidates[b].loss >= c.loss => {}
                _ => best = Some(i),
            }
        }
        if let Some(b) = best {
            let slot = rng.gen_range(0..entries.len());
            entries[slot] = candidates[b].clone();
        }
    }
}

/// Queue laws under random operation sequences (1000 seeds, capacity ≤ 5,
/// length ≤ 200) plus the EMA recurrence against its closed form.
pub fn memory_suite() -> Result<SuiteReport> {
    let started = Instant::now();
    let mut capacity_ok = true;
    let mut gate_ok = true;
    let mut state_ok = true;
    'seeds: for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let capacity = rng.gen_range(0..=5usize);
        let mut queue = HardSampleQueue::new(capacity, 0.2);
        let mut shadow: Vec<MemoryEntry> = Vec::new();
        let ops = rng.gen_range(1..=200usize);
        for _ in 0..ops {
            match rng.gen_range(0..3) {
                0 => {
                    let mean = rng.gen_range(0.0..=5.0);
                    queue.update_threshold(mean);
                }
                1 => {
                    let n = rng.gen_range(0..=5usize);
                    let candidates: Vec<MemoryEntry> = (0..n)
                        .map(|k| MemoryEntry {
                            trajectory: (0..HORIZON_STEPS)
                                .map(|i| (i as f64, k as f64))
                                .collect(),
                            loss: rng.gen_range(0.0..=10.0),
                            embedding: vec![k as f64],
                        })
                        .collect();
                    let before: Vec<f64> = queue.entries().iter().map(|e| e.loss).collect();
                    let none_admissible =
                        candidates.iter().all(|c| !(c.loss > queue.threshold));
                    // Oracle consumes the identical RNG stream.
                    let mut rng_clone = rng.clone();
                    queue.batch_update(&candidates, &mut rng);
                    queue_update_oracle(
                        &mut shadow,
                        capacity,
                        queue.threshold,
                        &candidates,
                        &mut rng_clone,
                    );
                    rng = rng_clone;
                    if queue.len() > capacity {
                        capacity_ok = false;
                        break 'seeds;
                    }
                    if none_admissible {
                        let after: Vec<f64> = queue.entries().iter().map(|e| e.loss).collect();
                        if before != after {
                            gate_ok = false;
                            break 'seeds;
                        }
                    }
                    if queue.entries() != shadow.as_slice() {
                        state_ok = false;
                        break 'seeds;
                    }
                }
                _ => {
                    let probe: Vec<(f64, f64)> =
                        (0..HORIZON_STEPS).map(|i| (i as f64, 0.0)).collect();
                    let _ = queue.matched(&probe);
                }
            }
        }
    }

    // Each EMA step must sit within one ulp of the closed-form recurrence
    // step from the same previous iterate, ε_t = L + γ·(ε_{t−1} − L),
    // evaluated here in compensated arithmetic as an independent route.
    let mut ema_ok = true;
    let mut ema_worst = 0.0_f64;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let gamma: f64 = rng.gen_range(0.05..=0.95);
        let level: f64 = rng.gen_range(0.1..=10.0);
        let start: f64 = rng.gen_range(0.0..=10.0);
        let mut eps = start;
        for _ in 0..40 {
            let next = update_threshold(eps, level, gamma);
            // Closed-form step with an exact residual product:
            // L + γ(ε − L) with the product error folded back in.
            let d = eps - level;
            let p = gamma * d;
            let p_err = f64::mul_add(gamma, d, -p);
            let closed = level + p + p_err;
            let ulp = (closed.abs() * f64::EPSILON).max(f64::MIN_POSITIVE);
            let diff = (next - closed).abs();
            ema_worst = ema_worst.max(diff / ulp);
            if diff > ulp {
                ema_ok = false;
            }
            eps = next;
        }
    }
    let elapsed = started.elapsed();
    Ok(SuiteReport {
        name: "memory".into(),
        cases: vec![
            case("capacity-bound", capacity_ok, "len <= capacity under all sequences".into()),
            case(
                "admission-gate",
                gate_ok,
                "below-threshold batches leave the queue unchanged".into(),
            ),
            case(
                "update-equivalence",
                state_ok,
                "entries match the independent oracle under a shared RNG".into(),
            ),
            case(
                "ema-recurrence",
                ema_ok,
                format!("max closed-form deviation = {ema_worst:.2} ulp (tolerance 1)"),
            ),
            case(
                "runtime",
                elapsed <= Duration::from_secs(30),
                format!("{:.1} s (budget 30 s)", elapsed.as_secs_f64()),
            ),
        ],
        elapsed,
    })
}

/// Run the named suite(s); `all` runs everything.
pub fn run_suite(name: &str) -> Result<Vec<SuiteReport>> {
    match name {
        "equivariance" => Ok(vec![equivariance_suite()?]),
        "gradients" => Ok(vec![gradient_suite()?]),
        "geometry" => Ok(vec![geometry_suite()?]),
        "memory" => Ok(vec![memory_suite()?]),
        "all" => Ok(vec![
            equivariance_suite()?,
            gradient_suite()?,
            geometry_suite()?,
            memory_suite()?,
        ]),
        other => Err(crate::Error::invalid(format!(
            "unknown suite `{other}` (expected equivariance|gradients|geometry|memory|all)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_suite_passes() {
        let report = geometry_suite().unwrap();
        assert!(report.passed(), "{}", report.text());
    }

    #[test]
    fn memory_suite_passes() {
        let report = memory_suite().unwrap();
        assert!(report.passed(), "{}", report.text());
    }

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(run_suite("bogus").is_err());
    }
}
