use rand::Rng;

use crate::numerics::store::ParameterStore;
use crate::numerics::tape::{Tape, Val};
use crate::numerics::tensor::Tensor;
use crate::{Error, Result};

/// Layer widths of an MLP: `input -> hidden... -> output`, tanh on hidden
/// layers, identity on the output layer.
#[derive(Debug, Clone)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl MlpSpec {
    /// The crate-wide default: two hidden layers of the given width.
    pub fn with_default_hidden(input: usize, hidden_width: usize, output: usize) -> Self {
        MlpSpec {
            input,
            hidden: vec![hidden_width, hidden_width],
            output,
        }
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.input;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output));
        dims
    }
}

/// Register `prefix.l{i}.w` / `prefix.l{i}.b` parameters for an MLP.
pub fn register_mlp(
    store: &mut ParameterStore,
    rng: &mut impl Rng,
    prefix: &str,
    spec: &MlpSpec,
) -> Result<()> {
    for (i, (rows, cols)) in spec.layer_dims().into_iter().enumerate() {
        store.register_xavier(&format!("{prefix}.l{i}.w"), rows, cols, rng)?;
        store.register(&format!("{prefix}.l{i}.b"), Tensor::zeros(&[1, cols]))?;
    }
    Ok(())
}

/// Forward pass through the MLP registered under `prefix`.
///
/// Hidden layers apply tanh; the output layer is linear. Every intermediate
/// is recorded on the tape for backprop. A width mismatch reports the
/// offending layer by name.
pub fn mlp_forward(
    tape: &mut Tape,
    store: &ParameterStore,
    prefix: &str,
    x: Val,
) -> Result<Val> {
    let mut layer = 0;
    let mut cur = x;
    loop {
        let w_name = format!("{prefix}.l{layer}.w");
        if !store.contains(&w_name) {
            if layer == 0 {
                return Err(Error::UnknownParameter(w_name));
            }
            return Ok(cur);
        }
        let next_exists = store.contains(&format!("{prefix}.l{}.w", layer + 1));
        let w = tape.param(store, &w_name)?;
        let b = tape.param(store, &format!("{prefix}.l{layer}.b"))?;
        let in_width = tape.value(cur).cols();
        let expected = tape.value(w).rows();
        if in_width != expected {
            return Err(Error::ShapeMismatch {
                context: format!("mlp layer `{w_name}`"),
                expected: format!("input width {expected}"),
                actual: format!("{in_width}"),
            });
        }
        let lin = tape.matmul(cur, w);
        let lin = tape.add_row(lin, b);
        cur = if next_exists { tape.tanh(lin) } else { lin };
        layer += 1;
    }
}

/// Register the `wq` / `wk` / `wv` projections of a cross-attention block.
pub fn register_cross_attention(
    store: &mut ParameterStore,
    rng: &mut impl Rng,
    prefix: &str,
    dim: usize,
) -> Result<()> {
    store.register_xavier(&format!("{prefix}.wq"), dim, dim, rng)?;
    store.register_xavier(&format!("{prefix}.wk"), dim, dim, rng)?;
    store.register_xavier(&format!("{prefix}.wv"), dim, dim, rng)?;
    Ok(())
}

/// Scaled dot-product cross-attention with learned projections:
/// `softmax(qWq (kWk)ᵀ / sqrt(d)) · vWv`, rows of the attention matrix
/// summing to one. Errors with "empty key set" when `k` has no rows.
pub fn cross_attention(
    tape: &mut Tape,
    store: &ParameterStore,
    prefix: &str,
    q: Val,
    k: Val,
    v: Val,
) -> Result<Val> {
    if tape.value(k).rows() == 0 {
        return Err(Error::EmptyKeySet);
    }
    let d = tape.value(q).cols();
    if tape.value(k).cols() != d || tape.value(v).cols() != d {
        return Err(Error::ShapeMismatch {
            context: format!("cross_attention `{prefix}`"),
            expected: format!("key/value width {d}"),
            actual: format!(
                "{} / {}",
                tape.value(k).cols(),
                tape.value(v).cols()
            ),
        });
    }
    let wq = tape.param(store, &format!("{prefix}.wq"))?;
    let wk = tape.param(store, &format!("{prefix}.wk"))?;
    let wv = tape.param(store, &format!("{prefix}.wv"))?;
    let qp = tape.matmul(q, wq);
    let kp = tape.matmul(k, wk);
    let vp = tape.matmul(v, wv);
    let kt = tape.transpose(kp);
    let logits = tape.matmul(qp, kt);
    let scaled = tape.scale(logits, 1.0 / (d as f64).sqrt());
    let attn = tape.softmax_rows(scaled);
    Ok(tape.matmul(attn, vp))
}

/// Set every layer of an MLP to zeros (useful for exercising residual paths).
pub fn zero_mlp(store: &mut ParameterStore, prefix: &str) -> Result<()> {
    let names: Vec<String> = store
        .names()
        .filter(|n| n.starts_with(&format!("{prefix}.l")))
        .map(String::from)
        .collect();
    for name in names {
        let shape = store.get(&name)?.shape().to_vec();
        store.set(&name, Tensor::zeros(&shape))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_mlp_maps_anything_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParameterStore::new();
        register_mlp(
            &mut store,
            &mut rng,
            "m",
            &MlpSpec::with_default_hidden(3, 8, 2),
        )
        .unwrap();
        zero_mlp(&mut store, "m").unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, -2.0, 3.0]]));
        let y = mlp_forward(&mut tape, &store, "m", x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn single_identity_layer_is_identity() {
        let mut store = ParameterStore::new();
        store.register("id.l0.w", Tensor::eye(2)).unwrap();
        store.register("id.l0.b", Tensor::zeros(&[1, 2])).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0]]));
        let y = mlp_forward(&mut tape, &store, "id", x).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn random_mlp_matches_straight_line_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParameterStore::new();
        register_mlp(
            &mut store,
            &mut rng,
            "m",
            &MlpSpec {
                input: 2,
                hidden: vec![3],
                output: 2,
            },
        )
        .unwrap();
        // Put a nonzero bias in to exercise the broadcast path.
        store
            .set("m.l0.b", Tensor::from_vec(vec![1, 3], vec![0.1, -0.2, 0.3]).unwrap())
            .unwrap();
        let x = [0.7, -1.3];
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::from_rows(&[x.to_vec()]));
        let y = mlp_forward(&mut tape, &store, "m", xv).unwrap();

        // Scalar re-computation of the same two layers.
        let w0 = store.get("m.l0.w").unwrap();
        let b0 = store.get("m.l0.b").unwrap();
        let w1 = store.get("m.l1.w").unwrap();
        let b1 = store.get("m.l1.b").unwrap();
        let mut h = [0.0; 3];
        for j in 0..3 {
            let mut s = b0.data()[j];
            for i in 0..2 {
                s += x[i] * w0.at(i, j);
            }
            h[j] = s.tanh();
        }
        let mut out = [0.0; 2];
        for j in 0..2 {
            let mut s = b1.data()[j];
            for i in 0..3 {
                s += h[i] * w1.at(i, j);
            }
            out[j] = s;
        }
        for j in 0..2 {
            assert!((tape.value(y).data()[j] - out[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn mlp_width_mismatch_names_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParameterStore::new();
        register_mlp(
            &mut store,
            &mut rng,
            "m",
            &MlpSpec::with_default_hidden(3, 4, 1),
        )
        .unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0]]));
        let err = mlp_forward(&mut tape, &store, "m", x).unwrap_err();
        assert!(err.to_string().contains("m.l0.w"), "{err}");
    }

    fn identity_attention_store(d: usize) -> ParameterStore {
        let mut store = ParameterStore::new();
        store.register("ca.wq", Tensor::eye(d)).unwrap();
        store.register("ca.wk", Tensor::eye(d)).unwrap();
        store.register("ca.wv", Tensor::eye(d)).unwrap();
        store
    }

    #[test]
    fn single_key_attention_returns_the_value_row() {
        let store = identity_attention_store(3);
        let mut tape = Tape::new();
        let q = tape.constant(Tensor::from_rows(&[
            vec![0.3, -1.0, 2.0],
            vec![5.0, 5.0, 5.0],
        ]));
        let k = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0, 0.0]]));
        let v = tape.constant(Tensor::from_rows(&[vec![7.0, 8.0, 9.0]]));
        let out = cross_attention(&mut tape, &store, "ca", q, k, v).unwrap();
        for r in 0..2 {
            assert_eq!(tape.value(out).row(r), &[7.0, 8.0, 9.0]);
        }
    }

    #[test]
    fn identical_keys_give_uniform_average_of_values() {
        let store = identity_attention_store(2);
        let mut tape = Tape::new();
        let q = tape.constant(Tensor::from_rows(&[vec![0.5, -0.5]]));
        let k = tape.constant(Tensor::from_rows(&vec![vec![1.0, 1.0]; 3]));
        let v = tape.constant(Tensor::from_rows(&[
            vec![0.0, 3.0],
            vec![3.0, 0.0],
            vec![6.0, 6.0],
        ]));
        let out = cross_attention(&mut tape, &store, "ca", q, k, v).unwrap();
        let row = tape.value(out).row(0);
        assert!((row[0] - 3.0).abs() < 1e-12);
        assert!((row[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn random_attention_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 4;
        let mut store = ParameterStore::new();
        register_cross_attention(&mut store, &mut rng, "ca", d).unwrap();
        let rand_rows = |rng: &mut ChaCha8Rng, m: usize| {
            Tensor::from_rows(
                &(0..m)
                    .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect::<Vec<_>>(),
            )
        };
        let qt = rand_rows(&mut rng, 2);
        let kt = rand_rows(&mut rng, 5);
        let vt = rand_rows(&mut rng, 5);
        let mut tape = Tape::new();
        let q = tape.constant(qt.clone());
        let k = tape.constant(kt.clone());
        let v = tape.constant(vt.clone());
        let out = cross_attention(&mut tape, &store, "ca", q, k, v).unwrap();

        let wq = store.get("ca.wq").unwrap();
        let wk = store.get("ca.wk").unwrap();
        let wv = store.get("ca.wv").unwrap();
        let proj = |x: &Tensor, w: &Tensor| crate::numerics::tensor::matmul(x, w);
        let qp = proj(&qt, wq);
        let kp = proj(&kt, wk);
        let vp = proj(&vt, wv);
        for r in 0..2 {
            let logits: Vec<f64> = (0..5)
                .map(|i| {
                    (0..d).map(|c| qp.at(r, c) * kp.at(i, c)).sum::<f64>() / (d as f64).sqrt()
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for c in 0..d {
                let expect: f64 = (0..5).map(|i| exps[i] / z * vp.at(i, c)).sum();
                assert!((tape.value(out).at(r, c) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_key_set_is_an_error() {
        let store = identity_attention_store(2);
        let mut tape = Tape::new();
        let q = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0]]));
        let k = tape.constant(Tensor::zeros(&[0, 2]));
        let v = tape.constant(Tensor::zeros(&[0, 2]));
        let err = cross_attention(&mut tape, &store, "ca", q, k, v).unwrap_err();
        assert!(matches!(err, Error::EmptyKeySet));
    }
}
