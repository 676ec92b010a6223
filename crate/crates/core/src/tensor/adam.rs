//! Adam optimizer over a parameter group.

use crate::error::{contract, Result};

use super::{ParamId, ParamStore};

/// Bias-corrected Adam state for one parameter group.
#[derive(Debug, Clone)]
pub struct AdamState {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    params: Vec<ParamId>,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        params: Vec<ParamId>,
        store: &ParamStore,
    ) -> Self {
        let first_moment = params
            .iter()
            .map(|&id| vec![0.0; store.get(id).len()])
            .collect();
        let second_moment = params
            .iter()
            .map(|&id| vec![0.0; store.get(id).len()])
            .collect();
        AdamState {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            params,
            first_moment,
            second_moment,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    /// Applies one bias-corrected update in place. Gradients are left
    /// untouched; the caller resets them between phases.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, &id) in self.params.iter().enumerate() {
            let name = store.name(id).to_string();
            let tensor = store.get_mut(id);
            let grad: Vec<f64> = tensor
                .grad()
                .ok_or_else(|| contract(format!("adam step: parameter {name} has no gradient")))?
                .to_vec();
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            let data = tensor.data_mut();
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store_with(value: &[f64]) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.register("p", Tensor::from_vec(1, value.len(), value.to_vec()).unwrap());
        (store, id)
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // m_hat = g, v_hat = g^2; update = lr * g / (|g| + eps) = lr for g=1.
        let (mut store, id) = store_with(&[0.5]);
        store.get_mut(id).accumulate_grad(&[1.0]).unwrap();
        let mut adam = AdamState::new(0.1, 0.9, 0.999, 1e-8, vec![id], &store);
        adam.step(&mut store).unwrap();
        let moved = 0.5 - store.get(id).data()[0];
        assert!((moved - 0.1).abs() < 1e-6, "moved {moved}");
    }

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let (mut store, id) = store_with(&[1.0, -2.0]);
        store.get_mut(id).accumulate_grad(&[0.0, 0.0]).unwrap();
        let mut adam = AdamState::new(0.1, 0.5, 0.999, 1e-8, vec![id], &store);
        adam.step(&mut store).unwrap();
        assert_eq!(store.get(id).data(), &[1.0, -2.0]);
    }

    #[test]
    fn identical_params_get_identical_updates() {
        let mut store = ParamStore::new();
        let a = store.register("a", Tensor::from_vec(1, 1, vec![1.0]).unwrap());
        let b = store.register("b", Tensor::from_vec(1, 1, vec![1.0]).unwrap());
        store.get_mut(a).accumulate_grad(&[0.3]).unwrap();
        store.get_mut(b).accumulate_grad(&[0.3]).unwrap();
        let mut adam = AdamState::new(0.01, 0.5, 0.999, 1e-8, vec![a, b], &store);
        adam.step(&mut store).unwrap();
        assert_eq!(store.get(a).data(), store.get(b).data());
    }

    #[test]
    fn missing_grad_is_a_contract_error() {
        let (mut store, id) = store_with(&[1.0]);
        let mut adam = AdamState::new(0.1, 0.5, 0.999, 1e-8, vec![id], &store);
        assert!(adam.step(&mut store).is_err());
    }
}
