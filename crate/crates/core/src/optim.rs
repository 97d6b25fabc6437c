//! Adam with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nn::{Gradients, ModelWeights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    /// lr = 1e-4, beta1 = 0.1, beta2 = 0.99, eps = 1e-8.
    ///
    /// beta1 = 0.1 is deliberately low; it is kept configurable.
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.1,
            beta2: 0.99,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.epsilon.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Per-parameter moment accumulators and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl AdamState {
    pub fn new(model: &ModelWeights) -> Self {
        Self {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &Gradients {
        &self.m
    }

    pub fn second_moment(&self) -> &Gradients {
        &self.v
    }

    /// Applies one update to `model` in place.
    pub fn step(
        &mut self,
        model: &mut ModelWeights,
        grads: &Gradients,
        cfg: &AdamConfig,
    ) -> Result<()> {
        if !model.gradients_match(grads) || !model.gradients_match(&self.m) {
            return Err(invalid("optimizer state, model and gradients differ in shape"));
        }
        self.t += 1;
        let t = self.t as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for (((w, &g), m), v) in model
            .params_mut()
            .zip(grads.values())
            .zip(self.m.values_mut())
            .zip(self.v.values_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        Ok(())
    }
}

/// Fresh state: zero moments, `t = 0`.
pub fn adam_init(model: &ModelWeights) -> AdamState {
    AdamState::new(model)
}

/// Value-returning form of [`AdamState::step`].
pub fn adam_step(
    state: &AdamState,
    model: &ModelWeights,
    grads: &Gradients,
    cfg: &AdamConfig,
) -> Result<(ModelWeights, AdamState)> {
    let mut next_model = model.clone();
    let mut next_state = state.clone();
    next_state.step(&mut next_model, grads, cfg)?;
    Ok((next_model, next_state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_weights, Layer, MlpArch};

    fn scalar_model(w: f64) -> ModelWeights {
        let arch = MlpArch::new(1, vec![], 1).unwrap();
        ModelWeights::from_layers(
            arch,
            vec![Layer {
                in_dim: 1,
                out_dim: 1,
                weights: vec![w],
                bias: vec![0.0],
            }],
        )
        .unwrap()
    }

    fn grads_from(model: &ModelWeights, values: &[f64]) -> Gradients {
        let mut g = Gradients::zeros_like(model);
        for (dst, src) in g.values_mut().zip(values) {
            *dst = *src;
        }
        g
    }

    #[test]
    fn init_is_zero() {
        let model = init_weights(&MlpArch::default_for(7).unwrap(), 1).unwrap();
        let s = adam_init(&model);
        assert_eq!(s.step_count(), 0);
        assert!(s.first_moment().values().all(|&x| x == 0.0));
        assert!(s.second_moment().values().all(|&x| x == 0.0));
        assert_eq!(s.first_moment().len(), model.param_count());
        assert_eq!(s, adam_init(&model));
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let model = init_weights(&MlpArch::default_for(7).unwrap(), 1).unwrap();
        let g = Gradients::zeros_like(&model);
        let (next, state) = adam_step(&adam_init(&model), &model, &g, &AdamConfig::default()).unwrap();
        assert_eq!(next, model);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn single_step_hand_value() {
        let model = scalar_model(0.0);
        let g = grads_from(&model, &[1.0, 0.0]);
        let (next, _) = adam_step(&adam_init(&model), &model, &g, &AdamConfig::default()).unwrap();
        // m = 0.9, v = 0.01, m_hat = 1, v_hat = 1
        let expected = -0.0001 * (1.0 / (1.0 + 1e-8));
        assert!((next.to_flat()[0] - expected).abs() < 1e-12);
        assert_eq!(next.to_flat()[1], 0.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = init_weights(&MlpArch::default_for(3).unwrap(), 1).unwrap();
        let b = init_weights(&MlpArch::default_for(4).unwrap(), 1).unwrap();
        let g = Gradients::zeros_like(&b);
        assert!(adam_step(&adam_init(&a), &a, &g, &AdamConfig::default()).is_err());
    }

    #[test]
    fn bad_config_rejected() {
        let mut cfg = AdamConfig { beta1: 1.0, ..AdamConfig::default() };
        assert!(cfg.validate().is_err());
        cfg = AdamConfig { learning_rate: 0.0, ..AdamConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(AdamConfig::default().validate().is_ok());
    }

    #[test]
    fn constant_gradient_steps_are_bounded() {
        let cfg = AdamConfig::default();
        let mut model = scalar_model(0.5);
        let mut state = adam_init(&model);
        let g = grads_from(&model, &[-3.0, 0.25]);
        for _ in 0..50 {
            let before = model.to_flat();
            state.step(&mut model, &g, &cfg).unwrap();
            for (b, a) in before.iter().zip(model.to_flat()) {
                assert!((a - b).abs() <= 2.0 * cfg.learning_rate);
            }
        }
        assert_eq!(state.step_count(), 50);
    }
}
