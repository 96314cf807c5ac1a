use std::collections::BTreeMap;

use rand::Rng;

use crate::numerics::tensor::Tensor;
use crate::{Error, Result};

/// One named parameter with its gradient buffer and Adam moments.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub moment1: Tensor,
    pub moment2: Tensor,
}

/// Named map of learnable tensors.
///
/// Ordered (BTreeMap) so every traversal — optimizer steps, checkpoints,
/// finite-difference sweeps — is deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    params: BTreeMap<String, Param>,
    adam_steps: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::DuplicateParameter(name.to_string()));
        }
        let shape = value.shape().to_vec();
        self.params.insert(
            name.to_string(),
            Param {
                value,
                grad: Tensor::zeros(&shape),
                moment1: Tensor::zeros(&shape),
                moment2: Tensor::zeros(&shape),
            },
        );
        Ok(())
    }

    /// Register with uniform Xavier/Glorot initialization for a `[fan_in × fan_out]` matrix.
    pub fn register_xavier(&mut self, name: &str, rows: usize, cols: usize, rng: &mut impl Rng) -> Result<()> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        self.register(name, Tensor::from_vec(vec![rows, cols], data)?)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// Replace a parameter's value (shape must match the registered shape).
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let param = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        if param.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                context: format!("ParameterStore::set `{name}`"),
                expected: format!("{:?}", param.value.shape()),
                actual: format!("{:?}", value.shape()),
            });
        }
        param.value = value;
        Ok(())
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.grad)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn accumulate_grad(&mut self, name: &str, delta: &Tensor) -> Result<()> {
        let param = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        debug_assert_eq!(param.grad.shape(), delta.shape());
        for (g, d) in param.grad.data_mut().iter_mut().zip(delta.data()) {
            *g += d;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for param in self.params.values_mut() {
            for g in param.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.numel()).sum()
    }

    pub fn adam_steps(&self) -> u64 {
        self.adam_steps
    }

    pub(crate) fn set_adam_steps(&mut self, steps: u64) {
        self.adam_steps = steps;
    }

    pub(crate) fn insert_raw(&mut self, name: String, param: Param) {
        self.params.insert(name, param);
    }

    /// Standard Adam update over every parameter. Moments persist across calls.
    pub fn adam_step(&mut self, lr: f64, betas: (f64, f64), eps: f64) {
        let (b1, b2) = betas;
        self.adam_steps += 1;
        let t = self.adam_steps as i32;
        let corr1 = 1.0 - b1.powi(t);
        let corr2 = 1.0 - b2.powi(t);
        for param in self.params.values_mut() {
            let n = param.value.numel();
            for i in 0..n {
                let g = param.grad.data()[i];
                let m = b1 * param.moment1.data()[i] + (1.0 - b1) * g;
                let v = b2 * param.moment2.data()[i] + (1.0 - b2) * g * g;
                param.moment1.data_mut()[i] = m;
                param.moment2.data_mut()[i] = v;
                let m_hat = m / corr1;
                let v_hat = v / corr2;
                param.value.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
