//! Unified two-stage trajectory decoder.
//!
//! Stage I decodes multi-modal trajectories for every agent and the ego plan
//! with one shared decoder and no privileged state input, so motion data
//! trains the same weights the planner uses. Stage II refines the plan
//! conditioned on the (possibly masked) ego state, with a state predictor
//! substituting the ground truth at inference time.

use rand::Rng;

use crate::config::ModelConfig;
use crate::ecsa::NodeEmbeddingSet;
use crate::memory::{fuse, HardSampleQueue};
use crate::numerics::nn::{
    cross_attention, mlp_forward, register_cross_attention, register_mlp, MlpSpec,
};
use crate::numerics::{ParameterStore, Tape, Tensor, Val};
use crate::scene::{
    motion_shape_pairs, scene_to_vehicle_frame, AgentRecord, EgoState, MapPolyline, Scene,
    HISTORY_STEPS, HORIZON_STEPS, STEP_SECONDS,
};
use crate::{Error, Result};

pub use crate::scene::EgoState as State;

/// Probability that the ego state is zero-masked during training.
pub const STATE_MASK_PROBABILITY: f64 = 0.0625;

/// Planning horizon in seconds (HORIZON_STEPS × STEP_SECONDS).
pub const HORIZON_SECONDS: f64 = HORIZON_STEPS as f64 * STEP_SECONDS;

/// Which ego state Stage II consumes at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateMode {
    GroundTruth,
    Predicted,
}

impl std::str::FromStr for StateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" | "ground_truth" => Ok(StateMode::GroundTruth),
            "stp" | "predicted" => Ok(StateMode::Predicted),
            other => Err(Error::invalid(format!(
                "unknown state mode `{other}` (expected gt|stp)"
            ))),
        }
    }
}

/// Multi-modal proposals for one query: trajectory rows `[K*T × 2]` (mode
/// blocks of T steps) and mode score logits `[1 × K]`.
#[derive(Debug, Clone, Copy)]
pub struct QueryDecode {
    pub trajectories: Val,
    pub scores: Val,
}

/// Stage-I output: one decode per agent (scene order) plus the plan row,
/// and the post-attention fused query matrix used by Stage II and the STP.
pub struct Stage1Output {
    pub agent_decodes: Vec<QueryDecode>,
    pub plan_decode: QueryDecode,
    /// `[(N_m + 1) × d]` fused queries; row i is agent i, last row the plan.
    pub fused_queries: Val,
    pub num_modes: usize,
}

impl Stage1Output {
    pub fn agent_query_row(&self, tape: &mut Tape, agent_idx: usize) -> Val {
        tape.gather_rows(self.fused_queries, &[agent_idx])
    }

    pub fn plan_query_row(&self, tape: &mut Tape) -> Val {
        let n = self.agent_decodes.len();
        tape.gather_rows(self.fused_queries, &[n])
    }
}

/// Plain-value view of a proposal set: `N×K×T×2` trajectories plus `N×K`
/// score logits.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryProposalSet {
    pub trajectories: Vec<Vec<Vec<(f64, f64)>>>,
    pub scores: Vec<Vec<f64>>,
}

impl TrajectoryProposalSet {
    pub fn num_queries(&self) -> usize {
        self.trajectories.len()
    }

    pub fn finite(&self) -> bool {
        self.trajectories.iter().flatten().flatten().all(|p| p.0.is_finite() && p.1.is_finite())
            && self.scores.iter().flatten().all(|s| s.is_finite())
    }
}

/// Extract plain trajectory/score values from decodes.
pub fn extract_proposals(tape: &Tape, decodes: &[QueryDecode], num_modes: usize) -> TrajectoryProposalSet {
    let mut trajectories = Vec::with_capacity(decodes.len());
    let mut scores = Vec::with_capacity(decodes.len());
    for d in decodes {
        let t = tape.value(d.trajectories);
        let steps = t.rows() / num_modes;
        let modes: Vec<Vec<(f64, f64)>> = (0..num_modes)
            .map(|k| {
                (0..steps)
                    .map(|s| (t.at(k * steps + s, 0), t.at(k * steps + s, 1)))
                    .collect()
            })
            .collect();
        trajectories.push(modes);
        scores.push(tape.value(d.scores).row(0).to_vec());
    }
    TrajectoryProposalSet {
        trajectories,
        scores,
    }
}

/// Register every decoder parameter under the `uttd.` prefix.
pub fn register_params(
    store: &mut ParameterStore,
    rng: &mut impl Rng,
    cfg: &ModelConfig,
) -> Result<()> {
    let d = cfg.embed_dim;
    let h = cfg.hidden_width;
    let k = cfg.num_modes;
    let head_out = k * HORIZON_STEPS * 2 + k;
    let small = |rng: &mut dyn rand::RngCore, n: usize| -> Tensor {
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(rng.gen_range(-0.1..0.1));
        }
        Tensor::from_vec(vec![1, n], data).unwrap()
    };
    store.register("uttd.q_motion", small(rng, d))?;
    store.register("uttd.q_plan", small(rng, d))?;
    register_cross_attention(store, rng, "uttd.ca", d)?;
    register_mlp(store, rng, "uttd.tdc", &MlpSpec::with_default_hidden(d, h, head_out))?;
    register_mlp(store, rng, "uttd.state_embed", &MlpSpec::with_default_hidden(3, h, d))?;
    register_mlp(
        store,
        rng,
        "uttd.traj_embed",
        &MlpSpec::with_default_hidden(k * HORIZON_STEPS * 2, h, d),
    )?;
    register_mlp(
        store,
        rng,
        "uttd.refine",
        &MlpSpec::with_default_hidden(3 * d, h, head_out),
    )?;
    register_mlp(
        store,
        rng,
        "uttd.stp",
        &MlpSpec::with_default_hidden(d + 2 * HISTORY_STEPS, h, 3),
    )?;
    Ok(())
}

/// Block lower-triangular cumulative-sum matrix: K blocks of [T×T] ones on
/// and below the diagonal. Multiplying per-step displacements by it yields
/// trajectories as cumulative sums.
fn cumsum_matrix(tape: &mut Tape, num_modes: usize, steps: usize) -> Val {
    let n = num_modes * steps;
    let mut m = Tensor::zeros(&[n, n]);
    for k in 0..num_modes {
        for i in 0..steps {
            for j in 0..=i {
                m.set_at(k * steps + i, k * steps + j, 1.0);
            }
        }
    }
    tape.constant(m)
}

/// Decode the TDC head output row into trajectory rows and scores.
fn decode_head_row(
    tape: &mut Tape,
    head: Val,
    row: usize,
    num_modes: usize,
    cumsum: Val,
) -> QueryDecode {
    let offsets_width = num_modes * HORIZON_STEPS * 2;
    let r = tape.gather_rows(head, &[row]);
    let offsets = tape.slice_cols(r, 0, offsets_width);
    let scores = tape.slice_cols(r, offsets_width, num_modes);
    let steps = tape.reshape(offsets, &[num_modes * HORIZON_STEPS, 2]);
    let trajectories = tape.matmul(cumsum, steps);
    QueryDecode {
        trajectories,
        scores,
    }
}

/// Stage I: joint motion/plan proposal generation (shared decoder).
///
/// Motion and plan queries cross-attend over the node embeddings, each query
/// is fused (summed) with its agent's own node embedding (the ego's for the
/// plan query), and the TDC head maps every query to K×T×2 per-step offsets
/// plus K mode scores. Trajectories are cumulative sums of the offsets.
pub fn stage1_decode(
    tape: &mut Tape,
    store: &ParameterStore,
    embeddings: &NodeEmbeddingSet,
    cfg: &ModelConfig,
) -> Result<Stage1Output> {
    let num_agents = embeddings.graph.num_agents;
    let ego_node = embeddings.graph.ego_node;

    let q_motion = tape.param(store, "uttd.q_motion")?;
    let q_plan = tape.param(store, "uttd.q_plan")?;
    let motion_rows = tape.gather_rows(q_motion, &vec![0; num_agents]);
    let queries = tape.concat_rows(&[motion_rows, q_plan]);
    let v = embeddings.embeddings;
    let attended = cross_attention(tape, store, "uttd.ca", queries, v, v)?;
    // Identity injection: each query row gets its own agent's embedding.
    let mut own_rows: Vec<usize> = (0..num_agents).collect();
    own_rows.push(ego_node);
    let own = tape.gather_rows(v, &own_rows);
    let fused = tape.add(attended, own);

    let head = mlp_forward(tape, store, "uttd.tdc", fused)?;
    let cumsum = cumsum_matrix(tape, cfg.num_modes, HORIZON_STEPS);
    let agent_decodes: Vec<QueryDecode> = (0..num_agents)
        .map(|i| decode_head_row(tape, head, i, cfg.num_modes, cumsum))
        .collect();
    let plan_decode = decode_head_row(tape, head, num_agents, cfg.num_modes, cumsum);
    Ok(Stage1Output {
        agent_decodes,
        plan_decode,
        fused_queries: fused,
        num_modes: cfg.num_modes,
    })
}

/// Mean per-step L2 distance between trajectory rows and a ground-truth
/// constant, as a tape scalar.
fn per_step_l2(tape: &mut Tape, rows: Val, gt: Val) -> Val {
    let diff = tape.sub(rows, gt);
    let sq = tape.mul(diff, diff);
    let ssq = tape.sum_cols(sq);
    let dist = tape.sqrt(ssq);
    tape.mean_all(dist)
}

/// Rows of one mode block within a `[K*T × 2]` trajectory tensor.
fn mode_rows(tape: &mut Tape, trajectories: Val, mode: usize) -> Val {
    let idx: Vec<usize> = (mode * HORIZON_STEPS..(mode + 1) * HORIZON_STEPS).collect();
    tape.gather_rows(trajectories, &idx)
}

/// Winner-take-all motion loss: the best of K proposals pays mean per-step
/// L2 against the ground truth, and the score head pays cross-entropy
/// against that winning mode.
pub fn motion_loss(
    tape: &mut Tape,
    decode: &QueryDecode,
    gt_local: &[(f64, f64)],
    num_modes: usize,
) -> Result<Val> {
    if gt_local.len() != HORIZON_STEPS {
        return Err(Error::invalid(format!(
            "motion_loss: ground truth has {} steps, expected {HORIZON_STEPS}",
            gt_local.len()
        )));
    }
    let gt_rows: Vec<Vec<f64>> = gt_local.iter().map(|p| vec![p.0, p.1]).collect();
    let gt = tape.constant(Tensor::from_rows(&gt_rows));
    let mut best: Option<(usize, Val)> = None;
    for k in 0..num_modes {
        let rows = mode_rows(tape, decode.trajectories, k);
        let l = per_step_l2(tape, rows, gt);
        let lv = tape.scalar_value(l);
        match best {
            Some((_, b)) if tape.scalar_value(b) <= lv => {}
            _ => best = Some((k, l)),
        }
    }
    let (k_star, l_star) = best.expect("num_modes >= 1");
    let ce = tape.cross_entropy_row(decode.scores, k_star);
    Ok(tape.add(l_star, ce))
}

/// Semicircle-lane pseudo plan targets.
///
/// Intersect the circle of radius `speed × horizon_seconds` around the ego
/// with every lane-center polyline, keep points in the forward half-plane of
/// the ego heading, and fall back to the ego position when the radius is
/// zero or nothing intersects. Points are in the scene frame.
pub fn pseudo_plan_gt(
    ego: &AgentRecord,
    lanes: &[&MapPolyline],
    horizon_seconds: f64,
) -> Vec<(f64, f64)> {
    let radius = ego.speed * horizon_seconds;
    if radius <= 0.0 {
        return vec![ego.position];
    }
    let center = ego.position;
    let heading = (ego.heading.cos(), ego.heading.sin());
    let mut points: Vec<(f64, f64)> = Vec::new();
    for lane in lanes {
        for seg in lane.points.windows(2) {
            for p in circle_segment_intersections(center, radius, seg[0], seg[1]) {
                let forward = (p.0 - center.0) * heading.0 + (p.1 - center.1) * heading.1;
                if forward <= 0.0 {
                    continue;
                }
                if points
                    .iter()
                    .all(|q| (q.0 - p.0).hypot(q.1 - p.1) > 1e-9)
                {
                    points.push(p);
                }
            }
        }
    }
    if points.is_empty() {
        vec![ego.position]
    } else {
        points
    }
}

/// 0, 1 or 2 intersection points of a circle with a closed segment, solved
/// from the quadratic in the segment parameter.
pub fn circle_segment_intersections(
    center: (f64, f64),
    radius: f64,
    a: (f64, f64),
    b: (f64, f64),
) -> Vec<(f64, f64)> {
    let d = (b.0 - a.0, b.1 - a.1);
    let f = (a.0 - center.0, a.1 - center.1);
    let qa = d.0 * d.0 + d.1 * d.1;
    if qa == 0.0 {
        return Vec::new();
    }
    let qb = 2.0 * (f.0 * d.0 + f.1 * d.1);
    let qc = f.0 * f.0 + f.1 * f.1 - radius * radius;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let mut out = Vec::new();
    for t in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
        if (0.0..=1.0).contains(&t) {
            let p = (a.0 + t * d.0, a.1 + t * d.1);
            if out
                .iter()
                .all(|q: &(f64, f64)| (q.0 - p.0).hypot(q.1 - p.1) > 1e-12)
            {
                out.push(p);
            }
        }
    }
    out
}

/// Stage-I plan loss: a hinged distribution term matching proposal endpoints
/// to the pseudo targets, plus winner-take-all L2 against the plan ground
/// truth. `pseudo_local` must already be in the ego's local frame.
pub fn stage1_plan_loss(
    tape: &mut Tape,
    decode: &QueryDecode,
    pseudo_local: &[(f64, f64)],
    plan_gt_local: &[(f64, f64)],
    hinge_distance: f64,
    num_modes: usize,
) -> Result<Val> {
    if pseudo_local.is_empty() {
        return Err(Error::invalid("stage1_plan_loss: empty pseudo target set"));
    }
    // Distribution term over proposal endpoints.
    let mut hinged_terms = Vec::with_capacity(num_modes);
    for k in 0..num_modes {
        let endpoint = tape.gather_rows(decode.trajectories, &[k * HORIZON_STEPS + HORIZON_STEPS - 1]);
        let mut best: Option<Val> = None;
        for p in pseudo_local {
            let target = tape.constant(Tensor::from_rows(&[vec![p.0, p.1]]));
            let diff = tape.sub(endpoint, target);
            let sq = tape.mul(diff, diff);
            let ssq = tape.sum_cols(sq);
            let d = tape.sqrt(ssq);
            let dv = tape.scalar_value(d);
            match best {
                Some(b) if tape.scalar_value(b) <= dv => {}
                _ => best = Some(d),
            }
        }
        let d_min = best.expect("nonempty pseudo set");
        let hinge = tape.scalar(hinge_distance);
        let over = tape.sub(d_min, hinge);
        hinged_terms.push(tape.relu(over));
    }
    let stacked = tape.concat_rows(&hinged_terms);
    let distribution = tape.mean_all(stacked);

    // Winner-take-all L2 against the plan ground truth.
    let gt_rows: Vec<Vec<f64>> = plan_gt_local.iter().map(|p| vec![p.0, p.1]).collect();
    let gt = tape.constant(Tensor::from_rows(&gt_rows));
    let mut best: Option<Val> = None;
    for k in 0..num_modes {
        let rows = mode_rows(tape, decode.trajectories, k);
        let l = per_step_l2(tape, rows, gt);
        let lv = tape.scalar_value(l);
        match best {
            Some(b) if tape.scalar_value(b) <= lv => {}
            _ => best = Some(l),
        }
    }
    let wta = best.expect("num_modes >= 1");
    Ok(tape.add(distribution, wta))
}

/// Invariant history encoding fed to the state predictor: per-step
/// (arc length, turning angle) pairs of history plus the current position.
pub fn history_encoding(agent: &AgentRecord) -> Vec<f64> {
    let mut track = agent.history.clone();
    track.push(agent.position);
    motion_shape_pairs(&track, agent.heading)
}

/// State predictor: MLP over the (fused) query row and the invariant history
/// encoding, emitting (speed, yaw rate, acceleration).
pub fn state_predictor(
    tape: &mut Tape,
    store: &ParameterStore,
    query_row: Val,
    history: &[f64],
) -> Result<Val> {
    if history.len() != 2 * HISTORY_STEPS {
        return Err(Error::invalid(format!(
            "state_predictor: history encoding must have {} values, got {}",
            2 * HISTORY_STEPS,
            history.len()
        )));
    }
    let h = tape.constant(Tensor::from_rows(&[history.to_vec()]));
    let joined = tape.concat_cols(&[query_row, h]);
    mlp_forward(tape, store, "uttd.stp", joined)
}

/// Mean squared error of the predicted state against the ground truth.
pub fn state_predictor_loss(tape: &mut Tape, predicted: Val, gt: &EgoState) -> Val {
    let target = tape.constant(Tensor::from_rows(&[gt.as_vec()]));
    let diff = tape.sub(predicted, target);
    let sq = tape.mul(diff, diff);
    tape.mean_all(sq)
}

/// Dropout-style state mask: zero with the given probability, identity
/// otherwise. All three fields mask together; the zeroing is a branch, not a
/// multiply, so masked outputs are bitwise independent of the state.
pub fn apply_state_mask_with(state: &EgoState, u: f64, probability: f64) -> (EgoState, f64) {
    if u < probability {
        (EgoState::zero(), 0.0)
    } else {
        (*state, 1.0)
    }
}

/// [`apply_state_mask_with`] at the 6.25% default.
pub fn apply_state_mask(state: &EgoState, u: f64) -> (EgoState, f64) {
    apply_state_mask_with(state, u, STATE_MASK_PROBABILITY)
}

/// Stage II: conditional refinement of the plan proposals.
///
/// A matched memory trajectory (when present) is fused into the plan query;
/// the head consumes `[Q_p, embed(state), embed(stage-I trajectories)]` and
/// emits per-step residual offsets plus score corrections. Both outputs are
/// residual: zeroing the head makes Stage II a no-op.
pub fn stage2_refine(
    tape: &mut Tape,
    store: &ParameterStore,
    plan_query_row: Val,
    state: Val,
    stage1: &QueryDecode,
    matched_memory: Option<&[(f64, f64)]>,
    num_modes: usize,
) -> Result<QueryDecode> {
    let q = match matched_memory {
        Some(traj) => fuse(tape, store, plan_query_row, traj)?,
        None => plan_query_row,
    };
    let state_emb = mlp_forward(tape, store, "uttd.state_embed", state)?;
    let flat = tape.reshape(stage1.trajectories, &[1, num_modes * HORIZON_STEPS * 2]);
    let traj_emb = mlp_forward(tape, store, "uttd.traj_embed", flat)?;
    let head_in = tape.concat_cols(&[q, state_emb, traj_emb]);
    let head = mlp_forward(tape, store, "uttd.refine", head_in)?;
    let offsets_width = num_modes * HORIZON_STEPS * 2;
    let residual_flat = tape.slice_cols(head, 0, offsets_width);
    let score_residual = tape.slice_cols(head, offsets_width, num_modes);
    let residual = tape.reshape(residual_flat, &[num_modes * HORIZON_STEPS, 2]);
    let trajectories = tape.add(stage1.trajectories, residual);
    let scores = tape.add(stage1.scores, score_residual);
    Ok(QueryDecode {
        trajectories,
        scores,
    })
}

/// The tape value of a (possibly masked) ego state.
pub fn state_constant(tape: &mut Tape, state: &EgoState) -> Val {
    tape.constant(Tensor::from_rows(&[state.as_vec()]))
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Result of one planning inference.
#[derive(Debug, Clone)]
pub struct PlanInference {
    /// Ego-local (x right, y forward) refined trajectory, T×2.
    pub trajectory: Vec<(f64, f64)>,
    /// Index of the selected mode.
    pub mode: usize,
    /// Stage-I proposals of every query (agents then plan).
    pub stage1: TrajectoryProposalSet,
    /// Predicted ego state, when the state predictor ran.
    pub predicted_state: Option<EgoState>,
}

/// Full planning inference for one scene: encoder → Stage I → memory match →
/// Stage II with ground-truth or predicted state → argmax-score proposal.
/// Deterministic: the same scene and parameters give bitwise-equal outputs.
pub fn infer_plan(
    scene: &Scene,
    store: &ParameterStore,
    cfg: &ModelConfig,
    use_ecsa: bool,
    use_stage2: bool,
    use_memory: bool,
    state_mode: StateMode,
    queue: Option<&HardSampleQueue>,
) -> Result<PlanInference> {
    let mut tape = Tape::new();
    let embeddings = crate::ecsa::encode_scene(&mut tape, store, scene, cfg, use_ecsa)?;
    let stage1 = stage1_decode(&mut tape, store, &embeddings, cfg)?;
    let plan_set = extract_proposals(&tape, &[stage1.plan_decode], cfg.num_modes);
    let all_stage1 = {
        let mut decodes = stage1.agent_decodes.clone();
        decodes.push(stage1.plan_decode);
        extract_proposals(&tape, &decodes, cfg.num_modes)
    };

    if !use_stage2 {
        let mode = argmax(&plan_set.scores[0]);
        return Ok(PlanInference {
            trajectory: plan_set.trajectories[0][mode].clone(),
            mode,
            stage1: all_stage1,
            predicted_state: None,
        });
    }

    let plan_q = stage1.plan_query_row(&mut tape);
    let ego = scene.ego()?;
    let ego_best_mode = argmax(&plan_set.scores[0]);
    let ego_best = plan_set.trajectories[0][ego_best_mode].clone();
    let matched = if use_memory {
        queue.and_then(|q| q.matched(&ego_best)).map(|e| e.trajectory.clone())
    } else {
        None
    };

    let mut predicted_state = None;
    let state_val = match state_mode {
        StateMode::GroundTruth => state_constant(&mut tape, &scene.ego_state_gt),
        StateMode::Predicted => {
            let pred = state_predictor(&mut tape, store, plan_q, &history_encoding(ego))?;
            let row = tape.value(pred).row(0);
            predicted_state = Some(EgoState {
                speed: row[0],
                yaw_rate: row[1],
                accel: row[2],
            });
            pred
        }
    };
    let refined = stage2_refine(
        &mut tape,
        store,
        plan_q,
        state_val,
        &stage1.plan_decode,
        matched.as_deref(),
        cfg.num_modes,
    )?;
    let refined_set = extract_proposals(&tape, &[refined], cfg.num_modes);
    let mode = argmax(&refined_set.scores[0]);
    Ok(PlanInference {
        trajectory: refined_set.trajectories[0][mode].clone(),
        mode,
        stage1: all_stage1,
        predicted_state,
    })
}

/// Per-agent motion inference. With refinement disabled each agent returns
/// its argmax Stage-I proposal; when enabled, every agent's proposals pass
/// through Stage II conditioned on the state predictor applied to that
/// agent's query and history.
pub fn infer_motion_refined(
    scene: &Scene,
    store: &ParameterStore,
    cfg: &ModelConfig,
    use_ecsa: bool,
    refine: bool,
) -> Result<Vec<Vec<(f64, f64)>>> {
    let mut tape = Tape::new();
    let embeddings = crate::ecsa::encode_scene(&mut tape, store, scene, cfg, use_ecsa)?;
    let stage1 = stage1_decode(&mut tape, store, &embeddings, cfg)?;
    let mut out = Vec::with_capacity(scene.agents.len());
    for (i, agent) in scene.agents.iter().enumerate() {
        let decode = stage1.agent_decodes[i];
        let decode = if refine {
            let q = stage1.agent_query_row(&mut tape, i);
            let predicted = state_predictor(&mut tape, store, q, &history_encoding(agent))?;
            stage2_refine(&mut tape, store, q, predicted, &decode, None, cfg.num_modes)?
        } else {
            decode
        };
        let set = extract_proposals(&tape, &[decode], cfg.num_modes);
        let mode = argmax(&set.scores[0]);
        out.push(set.trajectories[0][mode].clone());
    }
    Ok(out)
}

/// Pseudo targets converted into the ego's local (x right, y forward) frame.
pub fn pseudo_plan_gt_local(scene: &Scene, horizon_seconds: f64) -> Result<Vec<(f64, f64)>> {
    let ego = scene.ego()?;
    let lanes: Vec<&MapPolyline> = scene.lane_centers().collect();
    let pts = pseudo_plan_gt(ego, &lanes, horizon_seconds);
    Ok(pts
        .into_iter()
        .map(|p| scene_to_vehicle_frame(p, ego.position, ego.heading))
        .collect())
}
