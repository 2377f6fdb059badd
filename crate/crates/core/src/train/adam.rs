use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};

use super::config::TrainConfig;

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.value.rows(), p.value.cols())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn check_shapes(&self, store: &ParamStore) -> Result<()> {
        if self.m.len() != store.len() || self.v.len() != store.len() {
            return Err(Error::Contract(format!(
                "optimizer state has {} moments for {} parameters",
                self.m.len(),
                store.len()
            )));
        }
        for ((_, p), (m, v)) in store.iter().zip(self.m.iter().zip(&self.v)) {
            if m.shape() != p.value.shape() || v.shape() != p.value.shape() {
                return Err(Error::Shape {
                    op: "adam moments",
                    lhs: m.shape(),
                    rhs: p.value.shape(),
                });
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update from the gradients held in `store`,
/// with `weight_decay · θ` added to each gradient.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    state.check_shapes(store)?;
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (lr, wd, eps) = (config.learning_rate, config.weight_decay, config.adam_eps);
    for (p, (m, v)) in store.iter_mut().zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let values = p.value.data_mut();
        for (((x, &g), m), v) in values.iter_mut().zip(p.grad.data()).zip(m.data_mut()).zip(v.data_mut()) {
            let g = g + wd * *x;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *x -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64, grad: f64) -> ParamStore {
        let mut store = ParamStore::new();
        let id = store.register("w", Tensor::scalar(value)).unwrap();
        store.get_mut(id).grad = Tensor::scalar(grad);
        store
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = TrainConfig::default();
        for g in [0.3, -2.0, 1e-3] {
            let mut store = single(1.0, g);
            let mut state = AdamState::new(&store);
            adam_step(&mut store, &mut state, &cfg).unwrap();
            // m̂ = g and v̂ = g² after one bias-corrected step.
            let expected = 1.0 - cfg.learning_rate * g / (g.abs() + cfg.adam_eps);
            let got = store.iter().next().unwrap().1.value.item();
            assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
            assert_eq!(state.step, 1);
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let cfg = TrainConfig::default();
        let mut store = single(0.7, 0.0);
        let mut state = AdamState::new(&store);
        adam_step(&mut store, &mut state, &cfg).unwrap();
        assert_eq!(store.iter().next().unwrap().1.value.item(), 0.7);
    }

    #[test]
    fn weight_decay_shrinks_idle_parameters() {
        let cfg = TrainConfig {
            weight_decay: 1e-4,
            ..TrainConfig::default()
        };
        let mut store = single(-0.7, 0.0);
        let mut state = AdamState::new(&store);
        for _ in 0..3 {
            let before = store.iter().next().unwrap().1.value.item().abs();
            adam_step(&mut store, &mut state, &cfg).unwrap();
            assert!(store.iter().next().unwrap().1.value.item().abs() < before);
        }
    }

    #[test]
    fn mismatched_state_rejected() {
        let mut store = single(1.0, 1.0);
        let mut state = AdamState::new(&ParamStore::new());
        assert!(adam_step(&mut store, &mut state, &TrainConfig::default()).is_err());
    }
}
