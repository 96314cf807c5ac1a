use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::numerics::store::ParameterStore;
use crate::{Error, Result};

/// Which parameter coordinates a finite-difference sweep perturbs.
#[derive(Debug, Clone)]
pub enum CoordSampling {
    /// Every coordinate of every parameter.
    All,
    /// A seeded random subset of the given size (spread across parameters).
    Random { count: usize, seed: u64 },
}

/// Compare analytic gradients against central finite differences.
///
/// `f` runs one deterministic forward+backward pass: it must populate the
/// store's gradient buffers and return the scalar loss. Returns the maximum
/// over sampled coordinates of
/// `|analytic - central| / max(1, |central|)`.
pub fn finite_diff_check<F>(
    mut f: F,
    store: &mut ParameterStore,
    step: f64,
    sampling: &CoordSampling,
) -> Result<f64>
where
    F: FnMut(&mut ParameterStore) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    store.zero_grads();
    let base = f(store)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("finite_diff_check objective".into()));
    }
    let analytic: Vec<(String, Vec<f64>)> = store
        .iter()
        .map(|(name, p)| (name.to_string(), p.grad.data().to_vec()))
        .collect();

    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (pi, (_, grads)) in analytic.iter().enumerate() {
        for ci in 0..grads.len() {
            coords.push((pi, ci));
        }
    }
    if let CoordSampling::Random { count, seed } = sampling {
        let mut rng = ChaCha8Rng::seed_from_u64(*seed);
        coords.shuffle(&mut rng);
        coords.truncate(*count);
    }

    let mut max_rel = 0.0_f64;
    for (pi, ci) in coords {
        let name = analytic[pi].0.clone();
        let orig = store.get(&name)?.data()[ci];

        set_coord(store, &name, ci, orig + step)?;
        store.zero_grads();
        let plus = f(store)?;
        set_coord(store, &name, ci, orig - step)?;
        store.zero_grads();
        let minus = f(store)?;
        set_coord(store, &name, ci, orig)?;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite("finite_diff_check objective".into()));
        }

        let central = (plus - minus) / (2.0 * step);
        let rel = (analytic[pi].1[ci] - central).abs() / central.abs().max(1.0);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    store.zero_grads();
    Ok(max_rel)
}

fn set_coord(store: &mut ParameterStore, name: &str, idx: usize, value: f64) -> Result<()> {
    let mut t = store.get(name)?.clone();
    t.data_mut()[idx] = value;
    store.set(name, t)
}
