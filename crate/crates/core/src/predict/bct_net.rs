//! The BCT group classifier: a single-hidden-layer network over an
//! average-pooled, time-stacked scene-image sequence. It mirrors the input
//! and output contract of a full video classifier (sequence feature in,
//! three group probabilities out) at a fraction of the size.

use super::linalg::{scale, softmax, Affine, Mat};
use super::softmax_cross_entropy;
use super::train::AdamState;
use crate::config::TrainConfig;
use crate::features::sif::SeqFeature;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const BCT_GROUPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BctNetSpec {
    /// Pooling grid applied to every frame and channel.
    pub pool_rows: usize,
    pub pool_cols: usize,
    pub steps: usize,
    pub channels: usize,
    pub hidden: usize,
}

impl BctNetSpec {
    pub fn input_dim(&self) -> usize {
        self.pool_rows * self.pool_cols * self.steps * self.channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BctNet {
    pub spec: BctNetSpec,
    pub l1: Affine,
    pub l2: Affine,
}

/// Average-pool each frame and channel of a sequence feature onto a
/// `rows x cols` tile grid and flatten time-major.
pub fn pool_seq(seq: &SeqFeature, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(seq.steps * seq.channels * rows * cols);
    for s in 0..seq.steps {
        let frame = seq.step(s);
        for c in 0..seq.channels {
            for ty in 0..rows {
                let y0 = ty * seq.height / rows;
                let y1 = ((ty + 1) * seq.height / rows).max(y0 + 1);
                for tx in 0..cols {
                    let x0 = tx * seq.width / cols;
                    let x1 = ((tx + 1) * seq.width / cols).max(x0 + 1);
                    let mut sum = 0.0f64;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            sum += frame[(y * seq.width + x) * seq.channels + c] as f64;
                        }
                    }
                    // pixel values are O(255); normalize to O(1)
                    out.push(sum / ((y1 - y0) * (x1 - x0)) as f64 / 255.0);
                }
            }
        }
    }
    out
}

impl BctNet {
    pub fn zeros(spec: BctNetSpec) -> Self {
        let input = spec.input_dim();
        BctNet {
            l1: Affine::zeros(input, spec.hidden),
            l2: Affine::zeros(spec.hidden, BCT_GROUPS),
            spec,
        }
    }

    pub fn init(spec: BctNetSpec, seed: u64) -> Self {
        let mut net = Self::zeros(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |m: &mut Mat| {
            let bound = (6.0 / (m.rows + m.cols) as f64).sqrt();
            for w in &mut m.data {
                *w = rng.random_range(-bound..bound);
            }
        };
        fill(&mut net.l1.w);
        fill(&mut net.l2.w);
        net
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> =
            self.l1.forward(x).into_iter().map(super::linalg::relu).collect();
        self.l2.forward(&hidden)
    }

    /// Probability over the three groups; sums to one.
    pub fn predict(&self, x: &[f64]) -> [f64; 3] {
        let mut logits = self.logits(x);
        softmax(&mut logits);
        [logits[0], logits[1], logits[2]]
    }

    /// Predicted group in 1..=3.
    pub fn predict_group(&self, x: &[f64]) -> u8 {
        let p = self.predict(x);
        let mut best = 0;
        for i in 1..3 {
            if p[i] > p[best] {
                best = i;
            }
        }
        (best + 1) as u8
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = self.l1.w.data.clone();
        out.extend_from_slice(&self.l1.b);
        out.extend_from_slice(&self.l2.w.data);
        out.extend_from_slice(&self.l2.b);
        out
    }

    fn set_from_flat(&mut self, flat: &[f64]) {
        let mut o = 0;
        for t in [
            &mut self.l1.w.data[..],
            &mut self.l1.b[..],
            &mut self.l2.w.data[..],
            &mut self.l2.b[..],
        ] {
            t.copy_from_slice(&flat[o..o + t.len()]);
            o += t.len();
        }
        assert_eq!(o, flat.len());
    }

    pub fn tensor_layout(&self) -> Vec<(String, usize)> {
        vec![
            ("l1.w".into(), self.l1.w.data.len()),
            ("l1.b".into(), self.l1.b.len()),
            ("l2.w".into(), self.l2.w.data.len()),
            ("l2.b".into(), self.l2.b.len()),
        ]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.flatten()
    }

    pub fn load_flat(&mut self, flat: &[f64]) {
        self.set_from_flat(flat);
    }
}

/// Train on pooled features with labels in 0..3 (group minus one).
pub fn train_bct_net(
    spec: BctNetSpec,
    features: &[Vec<f64>],
    labels: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(BctNet, Vec<(usize, f64)>)> {
    if features.is_empty() {
        return Err(Error::invalid("BCT training set is empty"));
    }
    assert_eq!(features.len(), labels.len());
    let mut net = BctNet::init(spec, seed);
    let mut adam = AdamState::new(net.flatten().len());
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..features.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = BctNet::zeros(net.spec.clone());
            let mut loss = 0.0;
            for &i in batch {
                let x = &features[i];
                let hidden_pre = net.l1.forward(x);
                let hidden: Vec<f64> =
                    hidden_pre.iter().map(|&v| super::linalg::relu(v)).collect();
                let logits = net.l2.forward(&hidden);
                let (l, dlogits) = softmax_cross_entropy(&logits, labels[i]);
                loss += l;
                let dh = net.l2.backward(&hidden, &dlogits, &mut grads.l2);
                let dh_pre: Vec<f64> = dh
                    .iter()
                    .zip(&hidden_pre)
                    .map(|(&d, &pre)| if pre > 0.0 { d } else { 0.0 })
                    .collect();
                net.l1.backward(x, &dh_pre, &mut grads.l1);
            }
            loss /= batch.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, step: batches, loss });
            }
            let mut gflat = grads.flatten();
            scale(&mut gflat, 1.0 / batch.len() as f64);
            let mut params = net.flatten();
            adam.step(&mut params, &gflat, cfg.learning_rate);
            net.set_from_flat(&params);
            epoch_loss += loss;
            batches += 1;
        }
        trace.push((epoch, epoch_loss / batches as f64));
    }
    Ok((net, trace))
}
