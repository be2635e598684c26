//! Learnable predictors: the transformer-fusion beam classifier with
//! hand-written gradients, a location-only nearest-neighbour baseline, and
//! the compact BCT group classifier, plus checkpoint IO.

pub mod bct_net;
pub mod checkpoint;
pub mod knn;
pub mod linalg;
pub mod train;
pub mod vdban;

/// One training sample for the beam classifier.
#[derive(Debug, Clone)]
pub struct Sample {
    /// Raw G x 4 vehicle distribution feature, row-major.
    pub vdf: Vec<f64>,
    /// MS plane coordinates.
    pub loc: [f64; 2],
    pub label: usize,
}

/// Numerically stable softmax cross-entropy; returns the loss and the
/// gradient w.r.t. the logits (`p - onehot`).
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut probs = logits.to_vec();
    linalg::softmax(&mut probs);
    let loss = -(probs[label].max(1e-300)).ln();
    let mut grad = probs;
    grad[label] -= 1.0;
    (loss, grad)
}
