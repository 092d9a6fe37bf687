//! Adaptive-moment gradient descent with decoupled-from-nothing L2 decay
//! (the weight-decay term is added to the gradient, matching the classic
//! formulation).

use ndarray::ArrayD;

use super::{ParamSet, Scalar};

pub struct Adam<F> {
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<F: Scalar> Adam<F> {
    pub fn new(params: &ParamSet<F>) -> Self {
        Self {
            m: params.tensors().iter().map(|t| ArrayD::zeros(t.raw_dim())).collect(),
            v: params.tensors().iter().map(|t| ArrayD::zeros(t.raw_dim())).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut ParamSet<F>, grads: &[ArrayD<F>], lr: f64, weight_decay: f64) {
        assert_eq!(grads.len(), params.len());
        self.t += 1;
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let eps = F::from_f64(self.eps);
        let lr = F::from_f64(lr);
        let wd = F::from_f64(weight_decay);
        let bc1 = F::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = F::from_f64(1.0 - self.beta2.powi(self.t as i32));
        for slot in 0..grads.len() {
            let p = params.tensor(slot).to_owned();
            let mut new_p = p.clone();
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for (((pv, g0), mv), vv) in new_p
                .iter_mut()
                .zip(grads[slot].iter())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let g = *g0 + wd * *pv;
                *mv = b1 * *mv + (F::one() - b1) * g;
                *vv = b2 * *vv + (F::one() - b2) * g * g;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
            }
            params.update(slot, new_p);
        }
    }
}
