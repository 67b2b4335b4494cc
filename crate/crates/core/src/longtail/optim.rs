use std::f64::consts::PI;

use ndarray::{ArrayBase, ArrayD, Data, DataMut, Dimension, IxDyn, Zip};

/// Learning rate at `epoch` (zero-based) of a cosine schedule over `epochs`,
/// starting exactly at `lr_init`.
pub fn cosine_lr(lr_init: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs == 0 {
        return lr_init;
    }
    lr_init * 0.5 * (1.0 + (PI * epoch as f64 / epochs as f64).cos())
}

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
/// `v ← μ v + (g + λ p)`, `p ← p − η v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    buffers: Vec<ArrayD<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            buffers: Vec::new(),
        }
    }

    /// Updates parameter slot `slot`. Slots must be visited in the same order
    /// every step; `decay` selects whether weight decay applies to this slot.
    pub fn step<S, G, D>(&mut self, slot: usize, param: &mut ArrayBase<S, D>, grad: &ArrayBase<G, D>, lr: f64, decay: bool)
    where
        S: DataMut<Elem = f64>,
        G: Data<Elem = f64>,
        D: Dimension,
    {
        while self.buffers.len() <= slot {
            self.buffers.push(ArrayD::zeros(IxDyn(&[0])));
        }
        if self.buffers[slot].shape() != param.shape() {
            self.buffers[slot] = ArrayD::zeros(IxDyn(param.shape()));
        }
        let wd = if decay { self.weight_decay } else { 0.0 };
        let mu = self.momentum;
        let buf = self.buffers[slot]
            .view_mut()
            .into_dimensionality::<D>()
            .expect("buffer matches parameter rank");
        Zip::from(param).and(grad).and(buf).for_each(|p, &g, v| {
            *v = mu * *v + g + wd * *p;
            *p -= lr * *v;
        });
    }

    /// Scalar parameter convenience.
    pub fn step_scalar(&mut self, slot: usize, param: &mut f64, grad: f64, lr: f64, decay: bool) {
        let mut p = ndarray::arr1(&[*param]);
        self.step(slot, &mut p, &ndarray::arr1(&[grad]), lr, decay);
        *param = p[0];
    }
}
