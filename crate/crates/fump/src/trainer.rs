//! Joint training loop: encoder → stage-I decoding → losses → hard-sample
//! memory update → stage-II refinement → optimizer, with seeded determinism,
//! resumable checkpoints and the UMP / ECSA / UTTD ablation gates.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{config_hash, MetricRadii, TrainConfig};
use crate::ecsa::encode_scene;
use crate::memory::{HardSampleQueue, MemoryEntry};
use crate::metrics::{
    collides_at_horizons, l2_at_horizons, min_ade, CollisionAccumulator, EvalReport,
    HorizonAccumulator, Horizons,
};
use crate::numerics::checkpoint::{
    store_from_bytes, store_to_bytes, wire, CheckpointFile, SECTION_CONFIG, SECTION_MEMORY,
    SECTION_META, SECTION_PARAMS, SECTION_RNG,
};
use crate::numerics::{ParameterStore, Tape, Val};
use crate::scene::{vehicle_to_scene_frame, Scene};
use crate::uttd::{
    self, apply_state_mask_with, extract_proposals, history_encoding, infer_motion_refined,
    infer_plan, motion_loss, stage1_decode, stage1_plan_loss, stage2_refine, state_constant,
    state_predictor, state_predictor_loss, StateMode, HORIZON_SECONDS,
};
use crate::{Error, Result};

/// Training state snapshot; loading one and continuing reproduces an
/// uninterrupted run bitwise.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub store: ParameterStore,
    pub queue: HardSampleQueue,
    pub config: TrainConfig,
    pub config_hash: u64,
    pub rng_state: RngState,
    pub epoch: usize,
}

/// Serialized ChaCha8 generator state.
#[derive(Debug, Clone, PartialEq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub word_pos: u128,
    pub stream: u64,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            word_pos: rng.get_word_pos(),
            stream: rng.get_stream(),
        }
    }

    fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Per-batch loss component record.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub batch: usize,
    pub total: f64,
    pub motion: f64,
    pub stage1_plan: f64,
    pub stage2_plan: f64,
    pub state_predictor: f64,
}

/// CSV rendering of the loss curve.
pub fn loss_records_csv(records: &[LossRecord]) -> String {
    let mut out = String::from("epoch,batch,total,motion,stage1_plan,stage2_plan,state_predictor\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch, r.batch, r.total, r.motion, r.stage1_plan, r.stage2_plan, r.state_predictor
        ));
    }
    out
}

#[derive(Debug)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub losses: Vec<LossRecord>,
}

/// Register every learnable parameter for the given dimensions.
pub fn build_store(cfg: &TrainConfig) -> Result<ParameterStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = ParameterStore::new();
    crate::ecsa::register_params(&mut store, &mut rng, &cfg.model)?;
    crate::uttd::register_params(&mut store, &mut rng, &cfg.model)?;
    crate::memory::register_params(
        &mut store,
        &mut rng,
        cfg.model.embed_dim,
        cfg.model.hidden_width,
        crate::scene::HORIZON_STEPS,
    )?;
    Ok(store)
}

struct SceneForward {
    tape: Tape,
    stage1: uttd::Stage1Output,
    plan_query: Val,
    motion_losses: Vec<Val>,
    plan1_loss: Val,
    ego_stage1_best: Vec<(f64, f64)>,
    candidates: Vec<MemoryEntry>,
}

fn forward_stage1(cfg: &TrainConfig, store: &ParameterStore, scene: &Scene) -> Result<SceneForward> {
    let mut tape = Tape::new();
    let embeddings = encode_scene(&mut tape, store, scene, &cfg.model, cfg.flags.use_ecsa)?;
    let stage1 = stage1_decode(&mut tape, store, &embeddings, &cfg.model)?;
    let ego_idx = scene.ego_index()?;

    let mut motion_losses = Vec::new();
    let mut candidates = Vec::new();
    for (i, agent) in scene.agents.iter().enumerate() {
        if i == ego_idx {
            continue;
        }
        let loss = motion_loss(
            &mut tape,
            &stage1.agent_decodes[i],
            &agent.future_gt,
            cfg.model.num_modes,
        )?;
        let loss_value = tape.scalar_value(loss);
        motion_losses.push(loss);
        if cfg.flags.use_memory {
            let q = tape.gather_rows(stage1.fused_queries, &[i]);
            candidates.push(MemoryEntry {
                trajectory: agent.future_gt.clone(),
                loss: loss_value,
                embedding: tape.value(q).row(0).to_vec(),
            });
        }
    }

    let pseudo = uttd::pseudo_plan_gt_local(scene, HORIZON_SECONDS)?;
    let plan1_loss = stage1_plan_loss(
        &mut tape,
        &stage1.plan_decode,
        &pseudo,
        &scene.ego_future_gt,
        cfg.hinge_distance,
        cfg.model.num_modes,
    )?;

    let plan_set = extract_proposals(&tape, &[stage1.plan_decode], cfg.model.num_modes);
    let best_mode = plan_set.scores[0]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let ego_stage1_best = plan_set.trajectories[0][best_mode].clone();
    let plan_query = stage1.plan_query_row(&mut tape);

    Ok(SceneForward {
        tape,
        stage1,
        plan_query,
        motion_losses,
        plan1_loss,
        ego_stage1_best,
        candidates,
    })
}

/// Train from scratch.
pub fn train(cfg: &TrainConfig, scenes: &[Scene]) -> Result<TrainOutput> {
    train_from(cfg.clone(), scenes, None)
}

/// Resume a checkpoint until `checkpoint.config.epochs` epochs are complete.
pub fn resume(checkpoint: Checkpoint, scenes: &[Scene]) -> Result<TrainOutput> {
    let cfg = checkpoint.config.clone();
    train_from(cfg, scenes, Some(checkpoint))
}

fn train_from(
    cfg: TrainConfig,
    scenes: &[Scene],
    start: Option<Checkpoint>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if scenes.is_empty() {
        return Err(Error::invalid("no training scenes"));
    }
    let hash = config_hash(&cfg);
    let (mut store, mut queue, mut rng, first_epoch) = match start {
        Some(ckpt) => {
            if ckpt.config_hash != hash {
                return Err(Error::ConfigHashMismatch {
                    found: ckpt.config_hash,
                    expected: hash,
                });
            }
            (
                ckpt.store,
                ckpt.queue,
                ckpt.rng_state.restore(),
                ckpt.epoch,
            )
        }
        None => (
            build_store(&cfg)?,
            HardSampleQueue::new(cfg.queue_capacity, cfg.queue_gamma),
            // Separate stream from the init rng so parameter draws and
            // training-time draws never alias.
            ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E3779B97F4A7C15),
            0,
        ),
    };

    let mut losses = Vec::new();
    for epoch in first_epoch..cfg.epochs {
        let mut order: Vec<usize> = (0..scenes.len()).collect();
        order.shuffle(&mut rng);
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            store.zero_grads();
            let inv_batch = 1.0 / batch.len() as f64;

            // Stage I over the whole batch. Non-finite losses abort here,
            // before they can reach the memory queue or the optimizer.
            let mut forwards = Vec::with_capacity(batch.len());
            for &si in batch {
                let fwd = forward_stage1(&cfg, &store, &scenes[si])?;
                let finite = fwd.tape.scalar_value(fwd.plan1_loss).is_finite()
                    && fwd
                        .motion_losses
                        .iter()
                        .all(|&l| fwd.tape.scalar_value(l).is_finite());
                if !finite {
                    return Err(Error::NonFinite(format!(
                        "stage-1 loss at epoch {epoch} batch {batch_idx} (scene index {si})"
                    )));
                }
                forwards.push(fwd);
            }

            // Memory threshold + admissions between the stages.
            if cfg.flags.use_memory {
                let sample_losses: Vec<f64> = forwards
                    .iter()
                    .flat_map(|f| f.candidates.iter().map(|c| c.loss))
                    .collect();
                if !sample_losses.is_empty() {
                    let mean = sample_losses.iter().sum::<f64>() / sample_losses.len() as f64;
                    queue.update_threshold(mean);
                    let candidates: Vec<MemoryEntry> = forwards
                        .iter()
                        .flat_map(|f| f.candidates.iter().cloned())
                        .collect();
                    queue.batch_update(&candidates, &mut rng);
                }
            }

            // Stage II, losses, backward per scene.
            let mut batch_motion = 0.0;
            let mut batch_plan1 = 0.0;
            let mut batch_plan2 = 0.0;
            let mut batch_stp = 0.0;
            let mut batch_total = 0.0;
            for (forward, &si) in forwards.into_iter().zip(batch.iter()) {
                let scene = &scenes[si];
                let SceneForward {
                    mut tape,
                    stage1,
                    plan_query,
                    motion_losses,
                    plan1_loss,
                    ego_stage1_best,
                    ..
                } = forward;

                let mut terms: Vec<(Val, f64)> = Vec::new();
                let motion_value = if motion_losses.is_empty() {
                    0.0
                } else {
                    let stacked = tape.concat_rows(&motion_losses);
                    let mean = tape.mean_all(stacked);
                    let v = tape.scalar_value(mean);
                    if cfg.flags.joint_motion {
                        terms.push((mean, cfg.weights.motion));
                    }
                    v
                };
                let motion_recorded = if cfg.flags.joint_motion { motion_value } else { 0.0 };
                terms.push((plan1_loss, cfg.weights.stage1_plan));
                let plan1_value = tape.scalar_value(plan1_loss);

                let (plan2_value, stp_value) = if cfg.flags.use_uttd_stage2 {
                    let u: f64 = rng.gen();
                    let (masked, _m) =
                        apply_state_mask_with(&scene.ego_state_gt, u, cfg.mask_probability);
                    let matched = if cfg.flags.use_memory {
                        queue.matched(&ego_stage1_best).map(|e| e.trajectory.clone())
                    } else {
                        None
                    };
                    let state_val = state_constant(&mut tape, &masked);
                    let refined = stage2_refine(
                        &mut tape,
                        &store,
                        plan_query,
                        state_val,
                        &stage1.plan_decode,
                        matched.as_deref(),
                        cfg.model.num_modes,
                    )?;
                    let plan2 = motion_loss(
                        &mut tape,
                        &refined,
                        &scene.ego_future_gt,
                        cfg.model.num_modes,
                    )?;
                    terms.push((plan2, cfg.weights.stage2_plan));

                    let ego = scene.ego()?;
                    let predicted =
                        state_predictor(&mut tape, &store, plan_query, &history_encoding(ego))?;
                    let stp = state_predictor_loss(&mut tape, predicted, &scene.ego_state_gt);
                    terms.push((stp, cfg.weights.state_predictor));
                    (tape.scalar_value(plan2), tape.scalar_value(stp))
                } else {
                    (0.0, 0.0)
                };

                let mut total: Option<Val> = None;
                for (term, weight) in terms {
                    let scaled = tape.scale(term, weight * inv_batch);
                    total = Some(match total {
                        Some(acc) => tape.add(acc, scaled),
                        None => scaled,
                    });
                }
                let total = total.expect("at least the plan loss is present");
                let total_value = tape.scalar_value(total) / inv_batch;
                if !total_value.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss at epoch {epoch} batch {batch_idx} (scene index {si})"
                    )));
                }
                tape.backward(total, &mut store)?;

                batch_motion += motion_recorded;
                batch_plan1 += plan1_value;
                batch_plan2 += plan2_value;
                batch_stp += stp_value;
                batch_total += total_value;
            }

            store.adam_step(cfg.learning_rate, (0.9, 0.999), 1e-8);
            let n = batch.len() as f64;
            losses.push(LossRecord {
                epoch,
                batch: batch_idx,
                total: batch_total / n,
                motion: batch_motion / n,
                stage1_plan: batch_plan1 / n,
                stage2_plan: batch_plan2 / n,
                state_predictor: batch_stp / n,
            });
        }
    }

    Ok(TrainOutput {
        checkpoint: Checkpoint {
            store,
            queue,
            rng_state: RngState::capture(&rng),
            epoch: cfg.epochs,
            config_hash: hash,
            config: cfg,
        },
        losses,
    })
}

/// Evaluate a checkpoint on a dataset. Deterministic; scenes may fan out
/// over `FUMP_THREADS` worker threads with an index-ordered merge.
pub fn evaluate(
    checkpoint: &Checkpoint,
    scenes: &[Scene],
    state_mode: StateMode,
    motion_refine: bool,
    radii: &MetricRadii,
) -> Result<EvalReport> {
    if scenes.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let expected = config_hash(&checkpoint.config);
    if checkpoint.config_hash != expected {
        return Err(Error::ConfigHashMismatch {
            found: checkpoint.config_hash,
            expected,
        });
    }
    let threads = std::env::var("FUMP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1);

    struct SceneEval {
        l2: Horizons,
        collided: [bool; 3],
        agent_ades: Vec<f64>,
    }

    let eval_one = |scene: &Scene| -> Result<SceneEval> {
        let cfg = &checkpoint.config;
        let plan = infer_plan(
            scene,
            &checkpoint.store,
            &cfg.model,
            cfg.flags.use_ecsa,
            cfg.flags.use_uttd_stage2,
            cfg.flags.use_memory,
            state_mode,
            Some(&checkpoint.queue),
        )?;
        let l2 = l2_at_horizons(&plan.trajectory, &scene.ego_future_gt)?;
        let ego = scene.ego()?;
        let ego_world: Vec<(f64, f64)> = plan
            .trajectory
            .iter()
            .map(|&p| vehicle_to_scene_frame(p, ego.position, ego.heading))
            .collect();
        let agent_world: Vec<Vec<(f64, f64)>> = scene
            .agents
            .iter()
            .filter(|a| a.id != scene.ego_id)
            .map(|a| {
                a.future_gt
                    .iter()
                    .map(|&p| vehicle_to_scene_frame(p, a.position, a.heading))
                    .collect()
            })
            .collect();
        let collided = collides_at_horizons(&ego_world, &agent_world, radii);

        let motions = infer_motion_refined(
            scene,
            &checkpoint.store,
            &cfg.model,
            cfg.flags.use_ecsa,
            motion_refine && cfg.flags.use_uttd_stage2,
        )?;
        let mut agent_ades = Vec::new();
        for (i, agent) in scene.agents.iter().enumerate() {
            if agent.id == scene.ego_id {
                continue;
            }
            agent_ades.push(min_ade(&[motions[i].clone()], &agent.future_gt)?);
        }
        Ok(SceneEval {
            l2,
            collided,
            agent_ades,
        })
    };

    let results: Vec<SceneEval> = if threads <= 1 {
        scenes.iter().map(eval_one).collect::<Result<_>>()?
    } else {
        let chunk = scenes.len().div_ceil(threads);
        let mut slots: Vec<Option<Result<Vec<SceneEval>>>> =
            (0..threads).map(|_| None).collect();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (ti, part) in scenes.chunks(chunk).enumerate() {
                let eval_one = &eval_one;
                handles.push((
                    ti,
                    scope.spawn(move || part.iter().map(eval_one).collect::<Result<Vec<_>>>()),
                ));
            }
            for (ti, handle) in handles {
                slots[ti] = Some(handle.join().expect("evaluation thread panicked"));
            }
        });
        let mut merged = Vec::with_capacity(scenes.len());
        for slot in slots.into_iter().flatten() {
            merged.extend(slot?);
        }
        merged
    };

    let mut l2_acc = HorizonAccumulator::default();
    let mut col_acc = CollisionAccumulator::default();
    let mut ade_sum = 0.0;
    let mut ade_count = 0usize;
    for r in &results {
        l2_acc.push(&r.l2);
        col_acc.push(r.collided);
        for a in &r.agent_ades {
            ade_sum += a;
            ade_count += 1;
        }
    }
    Ok(EvalReport {
        l2: l2_acc.mean(),
        collision_rate: col_acc.rates_percent(),
        min_ade: if ade_count > 0 {
            ade_sum / ade_count as f64
        } else {
            0.0
        },
        cegr: Vec::new(),
        sample_count: scenes.len(),
        config_hash: checkpoint.config_hash,
    })
}

/// One ablation table row.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AblationRow {
    pub label: String,
    pub ump: bool,
    pub ecsa: bool,
    pub uttd: bool,
    pub l2: Horizons,
    pub collision_rate: Horizons,
    pub cegr_2s: f64,
    pub cegr_3s: f64,
    pub cegr_avg: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub d_ego: f64,
    pub d_total: f64,
}

impl AblationTable {
    pub fn text(&self) -> String {
        let mut out = String::from(
            "UMP   ECSA  UTTD  | L2 2s    L2 3s    L2 avg   | CEGR 2s  CEGR 3s  CEGR avg\n",
        );
        for r in &self.rows {
            let mark = |b: bool| if b { "x" } else { " " };
            out.push_str(&format!(
                "{:<5} {:<5} {:<5} | {:<8.4} {:<8.4} {:<8.4} | {:<8.2} {:<8.2} {:<8.2}\n",
                mark(r.ump),
                mark(r.ecsa),
                mark(r.uttd),
                r.l2.two_s,
                r.l2.three_s,
                r.l2.avg,
                r.cegr_2s,
                r.cegr_3s,
                r.cegr_avg
            ));
        }
        out
    }
}

/// Train the four UMP/ECSA/UTTD configurations with a shared seed and report
/// per-row L2 plus CEGR(L2) against the all-off baseline.
pub fn ablate(
    base: &TrainConfig,
    train_scenes: &[Scene],
    heldout: &[Scene],
    radii: &MetricRadii,
) -> Result<AblationTable> {
    let num_agent_trajs: usize = train_scenes
        .iter()
        .map(|s| s.agents.len().saturating_sub(1))
        .sum();
    let d_ego = train_scenes.len() as f64;
    let d_total = d_ego + num_agent_trajs as f64;

    let variants = [
        ("baseline", false, false, false),
        ("+UMP", true, false, false),
        ("+UMP+ECSA", true, true, false),
        ("+UMP+ECSA+UTTD", true, true, true),
    ];
    let mut rows = Vec::new();
    let mut baseline_l2: Option<Horizons> = None;
    for (label, ump, ecsa, uttd) in variants {
        let mut cfg = base.clone();
        cfg.flags.joint_motion = ump;
        cfg.flags.use_ecsa = ecsa;
        cfg.flags.use_uttd_stage2 = uttd;
        cfg.flags.use_memory = uttd;
        let out = train(&cfg, train_scenes)?;
        let state_mode = if uttd {
            StateMode::Predicted
        } else {
            StateMode::GroundTruth
        };
        let report = evaluate(&out.checkpoint, heldout, state_mode, false, radii)?;
        let (cegr_2s, cegr_3s, cegr_avg) = match &baseline_l2 {
            None => {
                baseline_l2 = Some(report.l2);
                // Baseline row is zero by definition.
                (0.0, 0.0, 0.0)
            }
            Some(base_l2) => (
                crate::metrics::cegr(report.l2.two_s, base_l2.two_s, d_ego, d_total, true)?,
                crate::metrics::cegr(report.l2.three_s, base_l2.three_s, d_ego, d_total, true)?,
                crate::metrics::cegr(report.l2.avg, base_l2.avg, d_ego, d_total, true)?,
            ),
        };
        rows.push(AblationRow {
            label: label.to_string(),
            ump,
            ecsa,
            uttd,
            l2: report.l2,
            collision_rate: report.collision_rate,
            cegr_2s,
            cegr_3s,
            cegr_avg,
        });
    }
    Ok(AblationTable {
        rows,
        d_ego,
        d_total,
    })
}

/// Write a checkpoint to disk.
pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let mut file = CheckpointFile::new(checkpoint.config_hash);
    file.push_section(SECTION_PARAMS, store_to_bytes(&checkpoint.store));
    file.push_section(SECTION_MEMORY, checkpoint.queue.to_bytes());
    let mut rng_bytes = Vec::new();
    rng_bytes.extend_from_slice(&checkpoint.rng_state.seed);
    wire::put_u128(&mut rng_bytes, checkpoint.rng_state.word_pos);
    wire::put_u64(&mut rng_bytes, checkpoint.rng_state.stream);
    file.push_section(SECTION_RNG, rng_bytes);
    let mut meta = Vec::new();
    wire::put_u32(&mut meta, checkpoint.epoch as u32);
    file.push_section(SECTION_META, meta);
    let config_json = serde_json::to_vec(&checkpoint.config)
        .map_err(|e| Error::invalid(format!("serializing config: {e}")))?;
    file.push_section(SECTION_CONFIG, config_json);
    file.write_to(path)
}

/// Load a checkpoint, verifying the stored config hashes to the header.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = CheckpointFile::read_from(path)?;
    let section = |tag: [u8; 4], name: &str| -> Result<&[u8]> {
        file.section(tag)
            .ok_or_else(|| Error::invalid(format!("checkpoint missing {name} section")))
    };
    let store = store_from_bytes(section(SECTION_PARAMS, "parameter")?)?;
    let queue = HardSampleQueue::from_bytes(section(SECTION_MEMORY, "memory")?)?;
    let rng_bytes = section(SECTION_RNG, "rng")?;
    if rng_bytes.len() != 32 + 16 + 8 {
        return Err(Error::invalid("malformed rng section"));
    }
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&rng_bytes[..32]);
    let mut cur = wire::Cursor::new(&rng_bytes[32..]);
    let rng_state = RngState {
        seed,
        word_pos: cur.u128()?,
        stream: cur.u64()?,
    };
    let mut meta = wire::Cursor::new(section(SECTION_META, "meta")?);
    let epoch = meta.u32()? as usize;
    let config: TrainConfig = serde_json::from_slice(section(SECTION_CONFIG, "config")?)
        .map_err(|e| Error::invalid(format!("parsing checkpoint config: {e}")))?;
    let expected = config_hash(&config);
    if file.config_hash != expected {
        return Err(Error::ConfigHashMismatch {
            found: file.config_hash,
            expected,
        });
    }
    Ok(Checkpoint {
        store,
        queue,
        config,
        config_hash: file.config_hash,
        rng_state,
        epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ModelConfig, ScenarioConfig};
    use crate::datagen::generate_scene;

    fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            epochs: 2,
            batch_size: 4,
            learning_rate: 1e-3,
            model: ModelConfig {
                embed_dim: 16,
                hidden_width: 16,
                k_neighbors: 3,
                local_layers: 1,
                num_modes: 6,
            },
            ..TrainConfig::default()
        }
    }

    fn small_dataset(n: usize) -> Vec<Scene> {
        let cfg = ScenarioConfig {
            min_agents: 2,
            max_agents: 4,
            ..ScenarioConfig::default()
        };
        (0..n as u64).map(|s| generate_scene(s, &cfg).unwrap()).collect()
    }

    #[test]
    fn training_is_deterministic() {
        let scenes = small_dataset(10);
        let cfg = small_config(7);
        let a = train(&cfg, &scenes).unwrap();
        let b = train(&cfg, &scenes).unwrap();
        assert_eq!(a.losses, b.losses);
        for (name, pa) in a.checkpoint.store.iter() {
            let pb = b.checkpoint.store.get(name).unwrap();
            assert_eq!(pa.value.data(), pb.data(), "param {name} diverged");
        }
    }

    #[test]
    fn gated_motion_loss_is_identically_zero() {
        let scenes = small_dataset(8);
        let mut cfg = small_config(3);
        cfg.flags.joint_motion = false;
        cfg.flags.use_memory = false;
        let out = train(&cfg, &scenes).unwrap();
        assert!(out.losses.iter().all(|r| r.motion == 0.0));
    }

    #[test]
    fn loss_decreases_on_small_dataset() {
        let scenes = small_dataset(24);
        let mut cfg = small_config(0);
        cfg.epochs = 6;
        cfg.learning_rate = 2e-3;
        let out = train(&cfg, &scenes).unwrap();
        let first: f64 = out.losses[..3].iter().map(|r| r.total).sum::<f64>() / 3.0;
        let last: f64 = out.losses[out.losses.len() - 3..]
            .iter()
            .map(|r| r.total)
            .sum::<f64>()
            / 3.0;
        assert!(
            last < first,
            "training did not reduce the loss: {first} -> {last}"
        );
    }

    #[test]
    fn checkpoint_roundtrip_resumes_bitwise() {
        let scenes = small_dataset(10);
        let mut cfg = small_config(5);
        cfg.epochs = 2;

        // Uninterrupted two epochs.
        let full = train(&cfg, &scenes).unwrap();

        // One epoch, save, load, resume to two.
        let mut cfg1 = cfg.clone();
        cfg1.epochs = 1;
        let half = train(&cfg1, &scenes).unwrap();
        let dir = std::env::temp_dir().join("fump_trainer_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("half.ckpt");
        // To resume to 2 epochs the stored config must carry the full count;
        // rebuild the checkpoint with the target epoch budget.
        let mut ckpt = half.checkpoint;
        ckpt.config.epochs = 2;
        ckpt.config_hash = config_hash(&ckpt.config);
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.epoch, 1);
        let resumed = resume(loaded, &scenes).unwrap();

        for (name, pf) in full.checkpoint.store.iter() {
            let pr = resumed.checkpoint.store.get(name).unwrap();
            let same = pf
                .value
                .data()
                .iter()
                .zip(pr.data())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "resume diverged at {name}");
        }
        assert_eq!(
            full.checkpoint.queue.entries(),
            resumed.checkpoint.queue.entries()
        );
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn evaluate_is_deterministic_and_validates() {
        let scenes = small_dataset(6);
        let cfg = small_config(2);
        let out = train(&cfg, &scenes).unwrap();
        let radii = MetricRadii::default();
        let a = evaluate(&out.checkpoint, &scenes, StateMode::Predicted, false, &radii).unwrap();
        let b = evaluate(&out.checkpoint, &scenes, StateMode::Predicted, false, &radii).unwrap();
        assert_eq!(a, b);
        assert!(evaluate(&out.checkpoint, &[], StateMode::Predicted, false, &radii).is_err());
        let gt = evaluate(&out.checkpoint, &scenes, StateMode::GroundTruth, false, &radii).unwrap();
        assert!(gt.l2.avg.is_finite());
    }

    #[test]
    fn evaluate_parallel_matches_serial() {
        let scenes = small_dataset(9);
        let cfg = small_config(4);
        let out = train(&cfg, &scenes).unwrap();
        let radii = MetricRadii::default();
        let serial = evaluate(&out.checkpoint, &scenes, StateMode::Predicted, false, &radii).unwrap();
        std::env::set_var("FUMP_THREADS", "3");
        let parallel =
            evaluate(&out.checkpoint, &scenes, StateMode::Predicted, false, &radii).unwrap();
        std::env::remove_var("FUMP_THREADS");
        assert_eq!(serial, parallel);
    }

    #[test]
    fn non_finite_loss_aborts_with_diagnostic() {
        // An absurd learning rate blows the parameters up within a few
        // steps; the loop must abort with an error naming the batch instead
        // of feeding garbage to the memory queue or optimizer.
        let scenes = small_dataset(8);
        let mut cfg = small_config(6);
        cfg.learning_rate = 1e300;
        cfg.epochs = 5;
        let err = train(&cfg, &scenes).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epoch") && msg.contains("batch"), "{msg}");
    }

    #[test]
    fn ablation_baseline_row_is_exactly_zero() {
        let scenes = small_dataset(8);
        let heldout = small_dataset(4);
        let mut cfg = small_config(1);
        cfg.epochs = 1;
        let table = ablate(&cfg, &scenes, &heldout, &MetricRadii::default()).unwrap();
        assert_eq!(table.rows.len(), 4);
        assert_eq!(table.rows[0].cegr_avg, 0.0);
        assert_eq!(table.rows[0].cegr_2s, 0.0);
        assert!(table.text().contains("CEGR"));
    }
}
