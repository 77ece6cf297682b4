use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Adam optimizer state with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. Moments are allocated on the first call
    /// and must keep the same shapes afterwards.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dim("adam parameter list", params.len(), grads.len()));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::dim(
                    format!("adam gradient {i}"),
                    format!("{:?}", p.shape()),
                    format!("{:?}", g.shape()),
                ));
            }
            g.ensure_finite(&format!("gradient of parameter {i}"))?;
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len()
            || self
                .first
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.shape() != p.shape())
        {
            return Err(Error::Contract("adam moments do not match parameter shapes".into()));
        }

        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = Tensor::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let mut adam = AdamState::new(0.1);
        adam.step(&mut [&mut p], &[Tensor::zeros(1, 3)]).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step_count(), 1);
        adam.step(&mut [&mut p], &[Tensor::zeros(1, 3)]).unwrap();
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the step is lr · g / (|g| + ε).
        let g = 0.37;
        let lr = 1e-3;
        let mut p = Tensor::scalar(5.0);
        let mut adam = AdamState::new(lr);
        adam.step(&mut [&mut p], &[Tensor::scalar(g)]).unwrap();
        let expected = 5.0 - lr * g / (g + 1e-8);
        assert!((p.get(0, 0) - expected).abs() < 1e-15);
        assert!(((5.0 - p.get(0, 0)) - lr).abs() < 1e-10);
    }

    #[test]
    fn identical_pairs_update_identically() {
        let mut a = Tensor::from_vec(2, 1, vec![0.3, -0.1]).unwrap();
        let mut b = a.clone();
        let g = Tensor::from_vec(2, 1, vec![0.5, 2.0]).unwrap();
        let mut adam = AdamState::new(0.01);
        adam.step(&mut [&mut a, &mut b], &[g.clone(), g]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_finite_and_mismatched_gradients() {
        let mut p = Tensor::zeros(1, 2);
        let mut adam = AdamState::new(0.01);
        let bad = Tensor::from_vec(1, 2, vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(adam.step(&mut [&mut p], &[bad]), Err(Error::Numeric(_))));
        assert_eq!(adam.step_count(), 0);
        assert!(adam.step(&mut [&mut p], &[Tensor::zeros(2, 1)]).is_err());
    }
}
