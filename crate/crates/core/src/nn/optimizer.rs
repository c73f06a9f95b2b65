//! Parameter updates: plain gradient steps or adaptive-moment estimation.
//! Gradients arrive already oriented so that `param += step` moves in the
//! intended direction (ascent for the actor objective, descent for the
//! critic loss).

use super::{DenseNetwork, GradientSet, NnError};
use crate::scalar::Real;
use ndarray::{Array1, Array2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// `param += rate * grad`.
    Sgd,
    /// Adaptive-moment estimation with bias correction.
    Adam,
}

#[derive(Debug, Clone)]
pub struct Optimizer<F> {
    kind: OptimizerKind,
    rate: F,
    beta1: F,
    beta2: F,
    eps: F,
    /// Decoupled weight decay: parameters shrink by `rate * decay * p`
    /// alongside each update, damping the far-field slopes of the network.
    weight_decay: F,
    /// First/second moment accumulators, allocated on first use.
    m: Option<(Vec<Array2<F>>, Vec<Array1<F>>)>,
    v: Option<(Vec<Array2<F>>, Vec<Array1<F>>)>,
    t: u64,
}

impl<F: Real> Optimizer<F> {
    pub fn sgd(rate: F) -> Self {
        assert!(rate > F::zero(), "learning rate must be positive");
        Optimizer {
            kind: OptimizerKind::Sgd,
            rate,
            beta1: F::zero(),
            beta2: F::zero(),
            eps: F::zero(),
            weight_decay: F::zero(),
            m: None,
            v: None,
            t: 0,
        }
    }

    pub fn adam(rate: F) -> Self {
        assert!(rate > F::zero(), "learning rate must be positive");
        Optimizer {
            kind: OptimizerKind::Adam,
            rate,
            beta1: F::lit(0.9),
            beta2: F::lit(0.999),
            eps: F::lit(1e-8),
            weight_decay: F::zero(),
            m: None,
            v: None,
            t: 0,
        }
    }

    pub fn with_weight_decay(mut self, decay: F) -> Self {
        assert!(decay >= F::zero());
        self.weight_decay = decay;
        self
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn rate(&self) -> F {
        self.rate
    }

    fn ensure_state(&mut self, net: &DenseNetwork<F>) {
        if self.m.is_none() {
            let zw = || net.weights().iter().map(|w| Array2::zeros(w.raw_dim())).collect();
            let zb = || net.biases().iter().map(|b| Array1::zeros(b.raw_dim())).collect();
            self.m = Some((zw(), zb()));
            self.v = Some((zw(), zb()));
        }
    }

    /// Applies one gradient set to the network parameters. Non-finite
    /// gradients are rejected, signalling a diverged run.
    pub fn apply(
        &mut self,
        net: &mut DenseNetwork<F>,
        grads: &GradientSet<F>,
    ) -> Result<(), NnError> {
        if !grads.matches(net) {
            return Err(NnError::ShapeMismatch);
        }
        if !grads.is_finite() {
            return Err(NnError::NonFiniteGradient);
        }
        let shrink = F::one() - self.rate * self.weight_decay;
        match self.kind {
            OptimizerKind::Sgd => {
                let rate = self.rate;
                for (w, g) in net.weights_mut().iter_mut().zip(&grads.weights) {
                    w.zip_mut_with(g, |p, &gv| *p = shrink * *p + rate * gv);
                }
                for (b, g) in net.biases_mut().iter_mut().zip(&grads.biases) {
                    b.zip_mut_with(g, |p, &gv| *p = shrink * *p + rate * gv);
                }
            }
            OptimizerKind::Adam => {
                self.ensure_state(net);
                self.t += 1;
                let (b1, b2, eps, rate) = (self.beta1, self.beta2, self.eps, self.rate);
                let t = F::lit(self.t as f64);
                let corr1 = F::one() - b1.powf(t);
                let corr2 = F::one() - b2.powf(t);
                let (mw, mb) = self.m.as_mut().unwrap();
                let (vw, vb) = self.v.as_mut().unwrap();
                for l in 0..net.n_layers() {
                    let g = &grads.weights[l];
                    let m = &mut mw[l];
                    let v = &mut vw[l];
                    m.zip_mut_with(g, |mv, &gv| *mv = b1 * *mv + (F::one() - b1) * gv);
                    v.zip_mut_with(g, |vv, &gv| *vv = b2 * *vv + (F::one() - b2) * gv * gv);
                    let w = &mut net.weights_mut()[l];
                    for ((p, &mv), &vv) in w.iter_mut().zip(m.iter()).zip(v.iter()) {
                        let mhat = mv / corr1;
                        let vhat = vv / corr2;
                        *p = shrink * *p + rate * mhat / (vhat.sqrt() + eps);
                    }
                    let g = &grads.biases[l];
                    let m = &mut mb[l];
                    let v = &mut vb[l];
                    m.zip_mut_with(g, |mv, &gv| *mv = b1 * *mv + (F::one() - b1) * gv);
                    v.zip_mut_with(g, |vv, &gv| *vv = b2 * *vv + (F::one() - b2) * gv * gv);
                    let b = &mut net.biases_mut()[l];
                    for ((p, &mv), &vv) in b.iter_mut().zip(m.iter()).zip(v.iter()) {
                        let mhat = mv / corr1;
                        let vhat = vv / corr2;
                        *p = shrink * *p + rate * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Free-function form used by the learner code.
pub fn apply_gradients<F: Real>(
    net: &mut DenseNetwork<F>,
    grads: &GradientSet<F>,
    opt: &mut Optimizer<F>,
) -> Result<(), NnError> {
    opt.apply(net, grads)
}
