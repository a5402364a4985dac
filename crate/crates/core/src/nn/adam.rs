use super::params::{Gradients, ParamStore};
use crate::Scalar;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    t: i32,
}

impl<F: Scalar> Adam<F> {
    pub fn new(store: &ParamStore<F>) -> Self {
        let zeros: Vec<Vec<F>> = store.iter().map(|p| vec![F::zero(); p.data.len()]).collect();
        Adam {
            beta1: F::of(0.9),
            beta2: F::of(0.999),
            eps: F::of(1e-8),
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &Gradients<F>, lr: F) {
        self.t += 1;
        let bc1 = F::one() - self.beta1.powi(self.t);
        let bc2 = F::one() - self.beta2.powi(self.t);
        for (i, p) in (0..store.len()).map(|i| (i, super::ParamId(i))) {
            let param = store.get_mut(p);
            let g = &grads.data[i];
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..param.data.len() {
                m[k] = self.beta1 * m[k] + (F::one() - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (F::one() - self.beta2) * g[k] * g[k];
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                param.data[k] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
