use crate::error::{shape_err, Result};
use crate::numerics::Tensor;

/// Bias-corrected Adam with per-parameter moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a [usize]>, learning_rate: f64) -> Self {
        let first_moment: Vec<Tensor> = shapes.into_iter().map(Tensor::zeros).collect();
        Self {
            second_moment: first_moment.clone(),
            first_moment,
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One update in place; `step` advances by exactly one.
    pub fn update(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        self.update_refs(params.iter_mut().collect(), grads)
    }

    /// [`update`](Self::update) over tensors owned elsewhere.
    pub fn update_refs(&mut self, mut params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(shape_err!(
                "adam: {} params, {} grads, {} moment buffers",
                params.len(),
                grads.len(),
                self.first_moment.len()
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(shape_err!(
                    "adam: param {:?}, grad {:?}, moment {:?}",
                    p.shape(),
                    g.shape(),
                    m.shape()
                ));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_no_op() {
        let mut p = vec![Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap()];
        let before = p.clone();
        let mut s = AdamState::new(p.iter().map(|t| t.shape()), 1e-3);
        s.update(&mut p, &[Tensor::zeros(&[3])]).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_learning_rate_is_no_op() {
        let mut p = vec![Tensor::new(&[2], vec![0.3, 0.7]).unwrap()];
        let before = p.clone();
        let mut s = AdamState::new(p.iter().map(|t| t.shape()), 0.0);
        for _ in 0..3 {
            s.update(&mut p, &[Tensor::new(&[2], vec![5.0, -1.0]).unwrap()])
                .unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(s.step, 3);
    }

    #[test]
    fn first_step_closed_form() {
        // m = 0.1, v = 0.001; bias-corrected both become 1 → θ = -0.1/(1+1e-8)
        let expected = -0.099_999_999_000_000_01;
        let mut p = vec![Tensor::scalar(0.0)];
        let mut s = AdamState::new(p.iter().map(|t| t.shape()), 0.1);
        s.update(&mut p, &[Tensor::scalar(1.0)]).unwrap();
        assert!((p[0].data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![Tensor::zeros(&[2])];
        let mut s = AdamState::new(p.iter().map(|t| t.shape()), 0.1);
        assert!(s.update(&mut p, &[Tensor::zeros(&[3])]).is_err());
        assert_eq!(s.step, 0);
    }
}
