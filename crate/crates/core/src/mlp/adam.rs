use super::model::{Gradients, MlpModel};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;

/// First and second moment accumulators with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(model: &MlpModel, learning_rate: f64, epsilon: f64) -> Self {
        let n = model.parameter_count();
        Self {
            first: vec![0.0; n],
            second: vec![0.0; n],
            step: 0,
            learning_rate,
            epsilon,
        }
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        let params = model
            .layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()));
        for (((p, g), m), v) in params.zip(grads.iter_values()).zip(&mut self.first).zip(&mut self.second) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(m: &MlpModel) -> Vec<f64> {
        m.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied()).collect()
    }

    fn constant_grads(model: &MlpModel, value: f64) -> Gradients {
        let mut g = Gradients::zeros_like(model);
        for l in &mut g.layers {
            l.weights.fill(value);
            l.biases.fill(value);
        }
        g
    }

    #[test]
    fn first_step_by_hand() {
        let mut model = MlpModel::zeros(&[3, 2, 1]).unwrap();
        let mut adam = AdamState::new(&model, 0.001, 1e-8);
        let g = constant_grads(&model, 1.0);
        adam.step(&mut model, &g);
        assert_eq!(adam.step, 1);
        assert!(adam.first.iter().all(|m| (m - 0.1).abs() < 1e-15));
        assert!(adam.second.iter().all(|v| (v - 0.001).abs() < 1e-15));
        assert!(params(&model).iter().all(|p| (p + 0.001).abs() < 1e-10));
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut model = MlpModel::init(&[3, 2, 1], 4).unwrap();
        let before = params(&model);
        let mut adam = AdamState::new(&model, 0.001, 1e-8);
        let g = Gradients::zeros_like(&model);
        adam.step(&mut model, &g);
        assert_eq!(params(&model), before);
        assert!(adam.second.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn constant_gradient_updates_do_not_grow() {
        let mut model = MlpModel::zeros(&[2, 1]).unwrap();
        let g = constant_grads(&model, 0.37);
        let mut adam = AdamState::new(&model, 0.001, 1e-8);
        let p0 = params(&model);
        adam.step(&mut model, &g);
        let p1 = params(&model);
        adam.step(&mut model, &g);
        let p2 = params(&model);
        for i in 0..p0.len() {
            let u1 = (p1[i] - p0[i]).abs();
            let u2 = (p2[i] - p1[i]).abs();
            assert!(u2 <= u1 * 1.001);
        }
    }
}
