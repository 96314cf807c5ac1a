//! Equivariant context-sharing scene encoder.
//!
//! Zone subgraphs are processed by message-passing layers whose inputs are
//! rigid-invariant edge/node features, pooled into one global node per zone
//! (PointNet-style), related on a fully connected 4-node global graph, and
//! shared back into the subgraph nodes through a pair of cross-attention
//! hops. Because nothing upstream of the network depends on the scene frame,
//! the resulting node embeddings are invariant to rigid transforms of the
//! whole scene and permutation-equivariant over nodes.

use rand::Rng;

use crate::config::ModelConfig;
use crate::numerics::nn::{
    cross_attention, mlp_forward, register_cross_attention, register_mlp, MlpSpec,
};
use crate::numerics::{ParameterStore, Tape, Tensor, Val};
use crate::scene::{
    build_subgraphs, encode_distance, velocity_vector, Scene, SceneGraph, Subgraph,
    EDGE_FEATURE_DIM, GLOBAL_EDGE_FEATURE_DIM, NODE_FEATURE_DIM, NUM_ZONES,
};
use crate::Result;

/// Per-node embeddings in scene node order.
pub struct NodeEmbeddingSet {
    /// `[n × d]` tape value.
    pub embeddings: Val,
    pub graph: SceneGraph,
}

/// The 4-node global graph: pooled features plus the frame-level summary
/// (mean position, summed velocity vector) per zone.
pub struct GlobalGraph {
    /// `[4 × d]` tape value.
    pub features: Val,
    pub positions: Vec<(f64, f64)>,
    pub velocities: Vec<(f64, f64)>,
}

/// Register every ECSA parameter under the `ecsa.` prefix.
pub fn register_params(
    store: &mut ParameterStore,
    rng: &mut impl Rng,
    cfg: &ModelConfig,
) -> Result<()> {
    let d = cfg.embed_dim;
    let h = cfg.hidden_width;
    register_mlp(
        store,
        rng,
        "ecsa.node_embed",
        &MlpSpec::with_default_hidden(NODE_FEATURE_DIM, h, d),
    )?;
    register_mlp(
        store,
        rng,
        "ecsa.edge_embed",
        &MlpSpec::with_default_hidden(EDGE_FEATURE_DIM, h, d),
    )?;
    for layer in 0..cfg.local_layers {
        register_egcl(store, rng, &format!("ecsa.local{layer}"), d, h)?;
    }
    register_mlp(
        store,
        rng,
        "ecsa.pointnet",
        &MlpSpec::with_default_hidden(d, h, d),
    )?;
    register_mlp(
        store,
        rng,
        "ecsa.global_edge_embed",
        &MlpSpec::with_default_hidden(GLOBAL_EDGE_FEATURE_DIM, h, d),
    )?;
    register_egcl(store, rng, "ecsa.global", d, h)?;
    register_cross_attention(store, rng, "ecsa.share.ca1", d)?;
    register_mlp(
        store,
        rng,
        "ecsa.share.ffn",
        &MlpSpec {
            input: d,
            hidden: vec![h],
            output: d,
        },
    )?;
    register_cross_attention(store, rng, "ecsa.share.ca2", d)?;
    Ok(())
}

fn register_egcl(
    store: &mut ParameterStore,
    rng: &mut impl Rng,
    prefix: &str,
    d: usize,
    h: usize,
) -> Result<()> {
    register_mlp(
        store,
        rng,
        &format!("{prefix}.g_e"),
        &MlpSpec::with_default_hidden(3 * d, h, d),
    )?;
    register_mlp(
        store,
        rng,
        &format!("{prefix}.g_x"),
        &MlpSpec::with_default_hidden(d, h, d),
    )?;
    register_mlp(
        store,
        rng,
        &format!("{prefix}.gate"),
        &MlpSpec::with_default_hidden(d, h, 1),
    )?;
    register_mlp(
        store,
        rng,
        &format!("{prefix}.g_h"),
        &MlpSpec::with_default_hidden(2 * d, h, d),
    )?;
    Ok(())
}

/// One equivariant graph convolution layer.
///
/// Per edge `(i, j)`: `m_ij = g_e([v_i, v_j, e_ij])`, gated by a learned
/// sigmoid scalar. Each node receives the mean of its gated, transformed
/// messages as a residual, then `v_i = g_h([v_i, Σ_j m_ij])`. A node without
/// edges passes through `g_h` with a zero aggregate.
pub fn egcl_layer(
    tape: &mut Tape,
    store: &ParameterStore,
    prefix: &str,
    nodes: Val,
    edges: &[(usize, usize)],
    edge_features: Val,
) -> Result<Val> {
    let n = tape.value(nodes).rows();
    let d = tape.value(nodes).cols();
    let (residual_in, msg_sum) = if edges.is_empty() {
        let zeros = tape.constant(Tensor::zeros(&[n, d]));
        (zeros, zeros)
    } else {
        let src: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let dst: Vec<usize> = edges.iter().map(|e| e.1).collect();
        let vi = tape.gather_rows(nodes, &src);
        let vj = tape.gather_rows(nodes, &dst);
        let m_in = tape.concat_cols(&[vi, vj, edge_features]);
        let messages = mlp_forward(tape, store, &format!("{prefix}.g_e"), m_in)?;
        let gate_logit = mlp_forward(tape, store, &format!("{prefix}.gate"), messages)?;
        let gate = tape.sigmoid(gate_logit);
        let transformed = mlp_forward(tape, store, &format!("{prefix}.g_x"), messages)?;
        let gated = tape.mul_col(transformed, gate);
        let agg = tape.scatter_rows(gated, &src, n);
        // Mean aggregation: scale each node by 1/#messages.
        let mut counts = vec![0.0; n];
        for &s in &src {
            counts[s] += 1.0;
        }
        let inv: Vec<f64> = counts
            .iter()
            .map(|&c| if c > 0.0 { 1.0 / c } else { 0.0 })
            .collect();
        let inv = tape.constant(Tensor::from_vec(vec![n, 1], inv)?);
        let scaled = tape.mul_col(agg, inv);
        let msg_sum = tape.scatter_rows(messages, &src, n);
        (scaled, msg_sum)
    };
    let updated = tape.add(nodes, residual_in);
    let gh_in = tape.concat_cols(&[updated, msg_sum]);
    mlp_forward(tape, store, &format!("{prefix}.g_h"), gh_in)
}

/// Pool each zone into one global node: PointNet max-pool over per-node MLP
/// outputs, mean member position, vector-summed member velocity. Empty zones
/// contribute a zero feature anchored at the ego position.
pub fn aggregate_global(
    tape: &mut Tape,
    store: &ParameterStore,
    subgraphs: &[Subgraph],
    zone_embeddings: &[Option<Val>],
    graph: &SceneGraph,
) -> Result<GlobalGraph> {
    let d = store.get("ecsa.pointnet.l0.w")?.shape()[0];
    let ego_pos = graph.nodes[graph.ego_node].position;
    let mut features = Vec::with_capacity(NUM_ZONES);
    let mut positions = Vec::with_capacity(NUM_ZONES);
    let mut velocities = Vec::with_capacity(NUM_ZONES);
    for (zone_idx, sub) in subgraphs.iter().enumerate() {
        match zone_embeddings[zone_idx] {
            Some(embeds) => {
                let per_node = mlp_forward(tape, store, "ecsa.pointnet", embeds)?;
                features.push(tape.max_pool_rows(per_node));
                let k = sub.member_scene_indices.len() as f64;
                let mean = sub
                    .positions
                    .iter()
                    .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
                positions.push((mean.0 / k, mean.1 / k));
                let vel = sub
                    .member_scene_indices
                    .iter()
                    .map(|&si| velocity_vector(&graph.nodes[si]))
                    .fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
                velocities.push(vel);
            }
            None => {
                features.push(tape.constant(Tensor::zeros(&[1, d])));
                positions.push(ego_pos);
                velocities.push((0.0, 0.0));
            }
        }
    }
    let features = tape.concat_rows(&features);
    Ok(GlobalGraph {
        features,
        positions,
        velocities,
    })
}

/// One message-passing pass over the fully connected 4-node global graph.
/// Edge features use the distance between zone anchor positions and the
/// difference of velocity norms — both rigid-invariant.
pub fn global_update(
    tape: &mut Tape,
    store: &ParameterStore,
    global: &GlobalGraph,
) -> Result<Val> {
    let mut edges = Vec::with_capacity(NUM_ZONES * (NUM_ZONES - 1));
    let mut rows = Vec::with_capacity(edges.capacity());
    for i in 0..NUM_ZONES {
        for j in 0..NUM_ZONES {
            if i == j {
                continue;
            }
            edges.push((i, j));
            let dist = (global.positions[i].0 - global.positions[j].0)
                .hypot(global.positions[i].1 - global.positions[j].1);
            let mut row = encode_distance(dist);
            let ni = global.velocities[i].0.hypot(global.velocities[i].1);
            let nj = global.velocities[j].0.hypot(global.velocities[j].1);
            row.push(ni - nj);
            rows.push(row);
        }
    }
    let raw = tape.constant(Tensor::from_rows(&rows));
    let edge_feats = mlp_forward(tape, store, "ecsa.global_edge_embed", raw)?;
    egcl_layer(tape, store, "ecsa.global", global.features, &edges, edge_feats)
}

/// Share one zone's global node back into its members:
/// `GV' = CA(GV, V, V)`, `H = FFN(GV')`, `V' = CA(V, H, H)`.
pub fn context_share(
    tape: &mut Tape,
    store: &ParameterStore,
    global_row: Val,
    members: Val,
) -> Result<Val> {
    let gv = cross_attention(tape, store, "ecsa.share.ca1", global_row, members, members)?;
    let h = mlp_forward(tape, store, "ecsa.share.ffn", gv)?;
    cross_attention(tape, store, "ecsa.share.ca2", members, h, h)
}

/// Encode every subgraph's raw node features with the learned embedding MLP.
fn embed_zone_features(
    tape: &mut Tape,
    store: &ParameterStore,
    sub: &Subgraph,
) -> Result<Option<Val>> {
    if sub.member_scene_indices.is_empty() {
        return Ok(None);
    }
    let raw = tape.constant(sub.node_features.clone());
    Ok(Some(mlp_forward(tape, store, "ecsa.node_embed", raw)?))
}

/// Full encoder: subgraphs → local message passing → global aggregation and
/// update → context sharing → embeddings concatenated back to scene order.
pub fn ecsa_forward(
    tape: &mut Tape,
    store: &ParameterStore,
    scene: &Scene,
    cfg: &ModelConfig,
) -> Result<NodeEmbeddingSet> {
    let graph = build_subgraphs(scene, cfg.k_neighbors)?;
    let mut zone_embeddings: Vec<Option<Val>> = Vec::with_capacity(NUM_ZONES);
    for sub in &graph.subgraphs {
        let mut embeds = embed_zone_features(tape, store, sub)?;
        if let Some(mut v) = embeds {
            let edge_raw = tape.constant(sub.edge_features.clone());
            let edge_feats = if sub.edges.is_empty() {
                tape.constant(Tensor::zeros(&[0, cfg.embed_dim]))
            } else {
                mlp_forward(tape, store, "ecsa.edge_embed", edge_raw)?
            };
            for layer in 0..cfg.local_layers {
                v = egcl_layer(
                    tape,
                    store,
                    &format!("ecsa.local{layer}"),
                    v,
                    &sub.edges,
                    edge_feats,
                )?;
            }
            embeds = Some(v);
        }
        zone_embeddings.push(embeds);
    }

    let global = aggregate_global(tape, store, &graph.subgraphs, &zone_embeddings, &graph)?;
    let global_updated = global_update(tape, store, &global)?;

    let mut shared: Vec<Val> = Vec::new();
    let mut order: Vec<usize> = Vec::new();
    for (zone_idx, sub) in graph.subgraphs.iter().enumerate() {
        let Some(members) = zone_embeddings[zone_idx] else {
            continue;
        };
        let global_row = tape.gather_rows(global_updated, &[zone_idx]);
        let updated = context_share(tape, store, global_row, members)?;
        shared.push(updated);
        order.extend(sub.member_scene_indices.iter().copied());
    }
    let stacked = tape.concat_rows(&shared);
    // Permute zone-major rows back into scene node order.
    let mut lookup = vec![0usize; graph.num_nodes()];
    for (row, &scene_idx) in order.iter().enumerate() {
        lookup[scene_idx] = row;
    }
    let embeddings = tape.gather_rows(stacked, &lookup);
    Ok(NodeEmbeddingSet { embeddings, graph })
}

/// Ablation encoder: per-node MLP embedding of the invariant features with
/// no message passing or context sharing.
pub fn plain_forward(
    tape: &mut Tape,
    store: &ParameterStore,
    scene: &Scene,
    cfg: &ModelConfig,
) -> Result<NodeEmbeddingSet> {
    let graph = build_subgraphs(scene, cfg.k_neighbors)?;
    let rows: Vec<Vec<f64>> = graph.nodes.iter().map(|n| n.features.clone()).collect();
    let raw = tape.constant(Tensor::from_rows(&rows));
    let embeddings = mlp_forward(tape, store, "ecsa.node_embed", raw)?;
    Ok(NodeEmbeddingSet { embeddings, graph })
}

/// Encoder dispatch on the ECSA ablation flag.
pub fn encode_scene(
    tape: &mut Tape,
    store: &ParameterStore,
    scene: &Scene,
    cfg: &ModelConfig,
    use_ecsa: bool,
) -> Result<NodeEmbeddingSet> {
    if use_ecsa {
        ecsa_forward(tape, store, scene, cfg)
    } else {
        plain_forward(tape, store, scene, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    fn test_config() -> ModelConfig {
        ModelConfig {
            embed_dim: 16,
            hidden_width: 16,
            k_neighbors: 3,
            local_layers: 2,
            num_modes: 6,
        }
    }

    use crate::testutil::random_scene;

    fn make_store(cfg: &ModelConfig, seed: u64) -> ParameterStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        register_params(&mut store, &mut rng, cfg).unwrap();
        store
    }

    #[test]
    fn zeroed_messages_with_identity_gh_leave_nodes_unchanged() {
        let cfg = test_config();
        let d = cfg.embed_dim;
        let store = make_store(&cfg, 0);
        // Fresh store: zeroed g_e / g_x / gate plus a single-layer g_h whose
        // weight selects the first input block (an exact identity-on-v map,
        // unreachable with tanh hidden layers).
        let mut lin = ParameterStore::new();
        let mut eye_top = Tensor::zeros(&[2 * d, d]);
        for i in 0..d {
            eye_top.set_at(i, i, 1.0);
        }
        lin.register("egcl.g_h.l0.w", eye_top).unwrap();
        lin.register("egcl.g_h.l0.b", Tensor::zeros(&[1, d])).unwrap();
        // g_e / g_x / gate zeroed three-layer MLPs still output zero.
        for (src, dst) in [
            ("ecsa.local0.g_e", "egcl.g_e"),
            ("ecsa.local0.g_x", "egcl.g_x"),
            ("ecsa.local0.gate", "egcl.gate"),
        ] {
            for l in 0..3 {
                for part in ["w", "b"] {
                    let t = store.get(&format!("{src}.l{l}.{part}")).unwrap().clone();
                    let zero = Tensor::zeros(t.shape());
                    lin.register(&format!("{dst}.l{l}.{part}"), zero).unwrap();
                }
            }
        }
        let mut tape = Tape::new();
        let nodes = tape.constant(Tensor::from_rows(&[
            (0..d).map(|i| i as f64 * 0.1).collect::<Vec<_>>(),
            (0..d).map(|i| 1.0 - i as f64 * 0.05).collect::<Vec<_>>(),
        ]));
        let edge_raw = tape.constant(Tensor::zeros(&[2, d]));
        let out = egcl_layer(&mut tape, &lin, "egcl", nodes, &[(0, 1), (1, 0)], edge_raw).unwrap();
        let before = tape.value(nodes).clone();
        assert_eq!(tape.value(out).data(), before.data());
    }

    #[test]
    fn isolated_node_passes_through_gh_with_zero_aggregate() {
        let cfg = test_config();
        let store = make_store(&cfg, 1);
        let d = cfg.embed_dim;
        let mut tape = Tape::new();
        let node_row: Vec<f64> = (0..d).map(|i| 0.3 * i as f64).collect();
        let nodes = tape.constant(Tensor::from_rows(&[node_row.clone()]));
        let empty_edges = tape.constant(Tensor::zeros(&[0, d]));
        let out = egcl_layer(&mut tape, &store, "ecsa.local0", nodes, &[], empty_edges).unwrap();

        // Oracle: g_h([v, 0]) computed through the MLP directly.
        let mut tape2 = Tape::new();
        let v = tape2.constant(Tensor::from_rows(&[node_row]));
        let zeros = tape2.constant(Tensor::zeros(&[1, d]));
        let gh_in = tape2.concat_cols(&[v, zeros]);
        let expect = mlp_forward(&mut tape2, &store, "ecsa.local0.g_h", gh_in).unwrap();
        assert_eq!(tape.value(out).data(), tape2.value(expect).data());
    }

    #[test]
    fn path_graph_matches_hand_unrolled_message_passing() {
        let cfg = test_config();
        let store = make_store(&cfg, 2);
        let d = cfg.embed_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let edge_rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        // Path graph 0-1-2, both directions.
        let edges = [(0usize, 1usize), (1, 0), (1, 2), (2, 1)];

        let mut tape = Tape::new();
        let nodes = tape.constant(Tensor::from_rows(&rows));
        let efeat = tape.constant(Tensor::from_rows(&edge_rows));
        let out = egcl_layer(&mut tape, &store, "ecsa.local0", nodes, &edges, efeat).unwrap();

        // Naive per-edge oracle using scalar MLP evaluation on a fresh tape.
        let eval_mlp = |prefix: &str, input: Vec<f64>| -> Vec<f64> {
            let mut t = Tape::new();
            let x = t.constant(Tensor::from_rows(&[input]));
            let y = mlp_forward(&mut t, &store, prefix, x).unwrap();
            t.value(y).data().to_vec()
        };
        let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut messages = Vec::new();
        for (e, &(i, j)) in edges.iter().enumerate() {
            let mut input = rows[i].clone();
            input.extend(rows[j].clone());
            input.extend(edge_rows[e].clone());
            messages.push(eval_mlp("ecsa.local0.g_e", input));
        }
        for i in 0..3 {
            let incident: Vec<usize> = edges
                .iter()
                .enumerate()
                .filter(|(_, &(s, _))| s == i)
                .map(|(e, _)| e)
                .collect();
            let mut resid = vec![0.0; d];
            let mut msum = vec![0.0; d];
            for &e in &incident {
                let gate = sigmoid(eval_mlp("ecsa.local0.gate", messages[e].clone())[0]);
                let gx = eval_mlp("ecsa.local0.g_x", messages[e].clone());
                for c in 0..d {
                    resid[c] += gate * gx[c];
                    msum[c] += messages[e][c];
                }
            }
            let inv = 1.0 / incident.len() as f64;
            let mut gh_in: Vec<f64> = rows[i]
                .iter()
                .enumerate()
                .map(|(c, v)| v + inv * resid[c])
                .collect();
            gh_in.extend(msum);
            let expect = eval_mlp("ecsa.local0.g_h", gh_in);
            for c in 0..d {
                let got = tape.value(out).at(i, c);
                assert!(
                    (got - expect[c]).abs() < 1e-9,
                    "node {i} col {c}: {got} vs {expect:?}"
                );
            }
        }
    }

    #[test]
    fn pointnet_pooling_is_permutation_invariant() {
        let cfg = test_config();
        let store = make_store(&cfg, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scene = random_scene(&mut rng, 6);
        let graph = build_subgraphs(&scene, cfg.k_neighbors).unwrap();
        // Pick the first non-empty zone and pool it twice with permuted rows.
        let sub = graph
            .subgraphs
            .iter()
            .find(|s| s.member_scene_indices.len() > 1)
            .expect("need a zone with >1 member");
        let mut tape = Tape::new();
        let raw = tape.constant(sub.node_features.clone());
        let feats = mlp_forward(&mut tape, &store, "ecsa.node_embed", raw).unwrap();
        let pooled = {
            let per_node = mlp_forward(&mut tape, &store, "ecsa.pointnet", feats).unwrap();
            tape.max_pool_rows(per_node)
        };
        let n = sub.member_scene_indices.len();
        let perm: Vec<usize> = (0..n).rev().collect();
        let permuted = tape.gather_rows(feats, &perm);
        let pooled_perm = {
            let per_node = mlp_forward(&mut tape, &store, "ecsa.pointnet", permuted).unwrap();
            tape.max_pool_rows(per_node)
        };
        assert_eq!(tape.value(pooled).data(), tape.value(pooled_perm).data());
    }

    #[test]
    fn singleton_zone_global_feature_is_mlp_of_the_node() {
        let cfg = test_config();
        let store = make_store(&cfg, 6);
        let d = cfg.embed_dim;
        let mut tape = Tape::new();
        let row: Vec<f64> = (0..d).map(|i| (i as f64).sin()).collect();
        let feats = tape.constant(Tensor::from_rows(&[row.clone()]));
        let per_node = mlp_forward(&mut tape, &store, "ecsa.pointnet", feats).unwrap();
        let pooled = tape.max_pool_rows(per_node);
        assert_eq!(
            tape.value(pooled).data(),
            tape.value(per_node).data(),
            "max over a singleton is the element"
        );
    }

    #[test]
    fn global_positions_are_member_means() {
        let cfg = test_config();
        let store = make_store(&cfg, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let scene = random_scene(&mut rng, 5);
        let mut tape = Tape::new();
        let graph = build_subgraphs(&scene, cfg.k_neighbors).unwrap();
        let zone_embeds: Vec<Option<Val>> = graph
            .subgraphs
            .iter()
            .map(|sub| embed_zone_features(&mut tape, &store, sub).unwrap())
            .collect();
        let global =
            aggregate_global(&mut tape, &store, &graph.subgraphs, &zone_embeds, &graph).unwrap();
        for (zi, sub) in graph.subgraphs.iter().enumerate() {
            if sub.member_scene_indices.is_empty() {
                assert_eq!(global.positions[zi], graph.nodes[graph.ego_node].position);
                continue;
            }
            let k = sub.positions.len() as f64;
            let mean = sub
                .positions
                .iter()
                .fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
            assert!((global.positions[zi].0 - mean.0 / k).abs() < 1e-12);
            assert!((global.positions[zi].1 - mean.1 / k).abs() < 1e-12);
        }
    }

    #[test]
    fn context_share_singleton_matches_hand_computation() {
        let cfg = test_config();
        let d = cfg.embed_dim;
        // Identity projections and a known FFN.
        let mut store = make_store(&cfg, 9);
        for name in ["ecsa.share.ca1", "ecsa.share.ca2"] {
            for proj in ["wq", "wk", "wv"] {
                store.set(&format!("{name}.{proj}"), Tensor::eye(d)).unwrap();
            }
        }
        let mut tape = Tape::new();
        let gv_row: Vec<f64> = (0..d).map(|i| 0.1 * i as f64).collect();
        let member_row: Vec<f64> = (0..d).map(|i| (i as f64 * 0.3).cos()).collect();
        let gv = tape.constant(Tensor::from_rows(&[gv_row]));
        let members = tape.constant(Tensor::from_rows(&[member_row.clone()]));
        let out = context_share(&mut tape, &store, gv, members).unwrap();
        // Single member: first CA returns the member row; FFN transforms it;
        // second CA (single key) returns the FFN output for every query.
        let mut oracle = Tape::new();
        let x = oracle.constant(Tensor::from_rows(&[member_row]));
        let h = mlp_forward(&mut oracle, &store, "ecsa.share.ffn", x).unwrap();
        for c in 0..d {
            assert!((tape.value(out).at(0, c) - oracle.value(h).at(0, c)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_agent_scene_runs_with_expected_shape() {
        let cfg = test_config();
        let store = make_store(&cfg, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scene = random_scene(&mut rng, 1);
        let mut tape = Tape::new();
        let out = ecsa_forward(&mut tape, &store, &scene, &cfg).unwrap();
        assert_eq!(
            tape.value(out.embeddings).shape(),
            &[1 + scene.map.len(), cfg.embed_dim]
        );
        assert!(tape.value(out.embeddings).all_finite());
    }

    #[test]
    fn embeddings_invariant_under_rigid_transform() {
        let cfg = test_config();
        let store = make_store(&cfg, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let n_agents = rng.gen_range(2..7);
            let scene = random_scene(&mut rng, n_agents);
            let angle = rng.gen_range(-PI..PI);
            let t = (rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
            let moved = scene.rigidly_transformed(angle, t);
            let mut tape_a = Tape::new();
            let a = ecsa_forward(&mut tape_a, &store, &scene, &cfg).unwrap();
            let mut tape_b = Tape::new();
            let b = ecsa_forward(&mut tape_b, &store, &moved, &cfg).unwrap();
            let delta = tape_a
                .value(a.embeddings)
                .data()
                .iter()
                .zip(tape_b.value(b.embeddings).data())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0_f64, f64::max);
            assert!(delta <= 1e-9, "embedding drift {delta}");
        }
    }

    #[test]
    fn embeddings_permute_with_agent_relabeling() {
        let cfg = test_config();
        let store = make_store(&cfg, 14);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let scene = random_scene(&mut rng, 5);
        // Swap agents 1 and 2 (non-ego) in list order; ids follow the swap so
        // ego detection is unaffected.
        let mut permuted = scene.clone();
        permuted.agents.swap(1, 2);
        let mut tape_a = Tape::new();
        let a = ecsa_forward(&mut tape_a, &store, &scene, &cfg).unwrap();
        let mut tape_b = Tape::new();
        let b = ecsa_forward(&mut tape_b, &store, &permuted, &cfg).unwrap();
        let ta = tape_a.value(a.embeddings);
        let tb = tape_b.value(b.embeddings);
        let d = cfg.embed_dim;
        for c in 0..d {
            assert!((ta.at(1, c) - tb.at(2, c)).abs() < 1e-9);
            assert!((ta.at(2, c) - tb.at(1, c)).abs() < 1e-9);
            assert!((ta.at(0, c) - tb.at(0, c)).abs() < 1e-9);
        }
    }

    #[test]
    fn exactly_four_global_nodes_for_any_scene() {
        let cfg = test_config();
        let store = make_store(&cfg, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in [1, 2, 8] {
            let scene = random_scene(&mut rng, n);
            let mut tape = Tape::new();
            let graph = build_subgraphs(&scene, cfg.k_neighbors).unwrap();
            let zone_embeds: Vec<Option<Val>> = graph
                .subgraphs
                .iter()
                .map(|sub| embed_zone_features(&mut tape, &store, sub).unwrap())
                .collect();
            let global =
                aggregate_global(&mut tape, &store, &graph.subgraphs, &zone_embeds, &graph)
                    .unwrap();
            assert_eq!(tape.value(global.features).rows(), NUM_ZONES);
            let updated = global_update(&mut tape, &store, &global).unwrap();
            assert_eq!(tape.value(updated).rows(), NUM_ZONES);
        }
    }
}
