//! Mini-batch training with adaptive-moment gradient descent.
//!
//! Gradients are accumulated over fixed-size shards of each batch (rayon
//! when available) and reduced in shard order, so training is bitwise
//! reproducible regardless of worker count. The returned weights are those
//! of the epoch with the best validation metric.

use super::vdban::{VdbanModel, VdbanSpec};
use super::Sample;
use crate::config::TrainConfig;
use crate::exec;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Samples per gradient shard; fixed so the reduction order (and thus the
/// result) does not depend on the worker count.
const SHARD: usize = 8;

pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let b1c = 1.0 - self.beta1.powi(self.t as i32);
        let b2c = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / b1c;
            let vhat = self.v[i] / b2c;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
}

pub struct TrainedVdban {
    pub model: VdbanModel,
    pub trace: Vec<EpochStats>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
}

/// Mean batch loss and mean gradients, sharded.
pub fn batch_gradients(
    model: &VdbanModel,
    samples: &[Sample],
    order: &[usize],
) -> (f64, VdbanModel) {
    let shards: Vec<&[usize]> = order.chunks(SHARD).collect();
    let partials: Vec<(f64, Box<VdbanModel>)> = exec::par_map(shards, |shard| {
        let mut grads = Box::new(VdbanModel::zeros(model.spec.clone()));
        let mut loss = 0.0;
        for &i in shard {
            loss += model.accumulate_sample(&samples[i], &mut grads);
        }
        (loss, grads)
    });
    let mut loss = 0.0;
    let mut total = VdbanModel::zeros(model.spec.clone());
    for (l, g) in partials {
        loss += l;
        total.add_assign(&g);
    }
    let n = order.len() as f64;
    let mut flat = total.flatten();
    super::linalg::scale(&mut flat, 1.0 / n);
    total.set_from_flat(&flat);
    (loss / n, total)
}

/// Train the beam classifier. `val_metric` scores a candidate model on the
/// validation split (higher is better); the best epoch's weights win.
pub fn train_vdban(
    spec: VdbanSpec,
    train: &[Sample],
    cfg: &TrainConfig,
    seed: u64,
    mut val_metric: impl FnMut(&VdbanModel) -> f64,
) -> Result<TrainedVdban> {
    if train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let mut model = VdbanModel::init(spec, seed);
    let mut adam = AdamState::new(model.num_params());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) = batch_gradients(&model, train, batch);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, step, loss });
            }
            let mut params = model.flatten();
            adam.step(&mut params, &grads.flatten(), cfg.learning_rate);
            model.set_from_flat(&params);
            epoch_loss += loss;
            batches += 1;
        }

        let val = val_metric(&model);
        trace.push(EpochStats { epoch, train_loss: epoch_loss / batches as f64, val_metric: val });
        if best.as_ref().map_or(true, |(_, b, _)| val > *b) {
            best = Some((epoch, val, model.flatten()));
        }
    }

    let (best_epoch, _, weights) = best.unwrap();
    model.set_from_flat(&weights);
    Ok(TrainedVdban { model, trace, best_epoch })
}
