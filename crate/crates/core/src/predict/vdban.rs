//! The transformer-fusion beam classifier.
//!
//! Two encoders embed the VDF (a 1-D convolution over grid rows followed by
//! an affine map) and the MS plane location into D-dimensional vectors `f`
//! and `u`. A stack of two-token multi-head self-attention blocks exchanges
//! information between them; each block applies shared per-head query/key/
//! value maps to the stacked rows `[u; f]`, projects the concatenated head
//! outputs back to D, and runs both rows through a shared two-layer
//! feed-forward net, with residual connections around both stages. The final
//! `u + f` feeds an MLP head over the restricted beam-pair set.
//!
//! Forward and backward passes are written out by hand and verified against
//! central finite differences in the tests and the acceptance suite.

use super::linalg::{add_assign, dot, relu, softmax, Affine, Mat};
use super::Sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Architecture sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VdbanSpec {
    /// Number of grid rows G in the VDF.
    pub grid_rows: usize,
    /// Embedding width D shared by both encoders.
    pub embed_dim: usize,
    /// Per-head widths of the attention blocks, in order.
    pub attn_dims: Vec<usize>,
    pub heads: usize,
    /// Hidden width of the shared feed-forward net inside each block.
    pub ff_hidden: usize,
    /// Hidden widths of the MLP head.
    pub mlp_hidden: Vec<usize>,
    pub num_classes: usize,
}

impl VdbanSpec {
    /// The reference architecture: D = 64, two blocks with d = 16 and
    /// d = 32 at 4 heads each, and a 1024-1024 head.
    pub fn reference(grid_rows: usize, num_classes: usize) -> Self {
        VdbanSpec {
            grid_rows,
            embed_dim: 64,
            attn_dims: vec![16, 32],
            heads: 4,
            ff_hidden: 128,
            mlp_hidden: vec![1024, 1024],
            num_classes,
        }
    }
}

/// One attention block's parameters: per-head Q/K/V maps, the output
/// projection, and the shared feed-forward pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub w_q: Vec<Mat>,
    pub w_k: Vec<Mat>,
    pub w_v: Vec<Mat>,
    pub w_o: Mat,
    pub ff1: Affine,
    pub ff2: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VdbanModel {
    pub spec: VdbanSpec,
    /// 1-D convolution over VDF rows: one filter, kernel 1, stride 1.
    pub conv: Affine,
    pub vdf_embed: Affine,
    pub loc_embed: Affine,
    pub blocks: Vec<AttentionBlock>,
    pub head: Vec<Affine>,
}

pub(crate) struct HeadCache {
    q: [Vec<f64>; 2],
    k: [Vec<f64>; 2],
    v: [Vec<f64>; 2],
    a: [[f64; 2]; 2],
}

pub(crate) struct BlockCache {
    x: [Vec<f64>; 2],
    heads: Vec<HeadCache>,
    concat: [Vec<f64>; 2],
    res: [Vec<f64>; 2],
    ff_pre: [Vec<f64>; 2],
    ff_act: [Vec<f64>; 2],
}

/// Intermediate activations of one forward pass, consumed by `backward`.
pub struct Cache {
    vdf_scaled: Vec<f64>,
    loc: [f64; 2],
    conv_pre: Vec<f64>,
    conv_act: Vec<f64>,
    blocks: Vec<BlockCache>,
    head_inputs: Vec<Vec<f64>>,
    head_pre: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

/// Single-head two-token attention: stack `[u; f]`, apply Q/K/V, softmax
/// the scaled score matrix row-wise, and mix the values.
pub(crate) fn head_forward(
    u: &[f64],
    f: &[f64],
    w_q: &Mat,
    w_k: &Mat,
    w_v: &Mat,
) -> ([Vec<f64>; 2], HeadCache) {
    let d = w_q.cols;
    let q = [w_q.vecmat(u), w_q.vecmat(f)];
    let k = [w_k.vecmat(u), w_k.vecmat(f)];
    let v = [w_v.vecmat(u), w_v.vecmat(f)];
    let scale = 1.0 / (d as f64).sqrt();
    let mut a = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            a[i][j] = dot(&q[i], &k[j]) * scale;
        }
        softmax(&mut a[i]);
    }
    let mix = |row: &[f64; 2]| -> Vec<f64> {
        (0..d).map(|t| row[0] * v[0][t] + row[1] * v[1][t]).collect()
    };
    let out = [mix(&a[0]), mix(&a[1])];
    (out, HeadCache { q, k, v, a })
}

impl VdbanModel {
    /// All-zero parameters with the given architecture.
    pub fn zeros(spec: VdbanSpec) -> Self {
        let d_embed = spec.embed_dim;
        let blocks = spec
            .attn_dims
            .iter()
            .map(|&d| AttentionBlock {
                w_q: (0..spec.heads).map(|_| Mat::zeros(d_embed, d)).collect(),
                w_k: (0..spec.heads).map(|_| Mat::zeros(d_embed, d)).collect(),
                w_v: (0..spec.heads).map(|_| Mat::zeros(d_embed, d)).collect(),
                w_o: Mat::zeros(spec.heads * d, d_embed),
                ff1: Affine::zeros(d_embed, spec.ff_hidden),
                ff2: Affine::zeros(spec.ff_hidden, d_embed),
            })
            .collect();
        let mut head = Vec::new();
        let mut prev = d_embed;
        for &h in &spec.mlp_hidden {
            head.push(Affine::zeros(prev, h));
            prev = h;
        }
        head.push(Affine::zeros(prev, spec.num_classes));
        VdbanModel {
            conv: Affine::zeros(4, 1),
            vdf_embed: Affine::zeros(spec.grid_rows, d_embed),
            loc_embed: Affine::zeros(2, d_embed),
            blocks,
            head,
            spec,
        }
    }

    /// Seeded init: weights uniform in +-sqrt(6 / (fan_in + fan_out)),
    /// biases zero.
    pub fn init(spec: VdbanSpec, seed: u64) -> Self {
        let mut model = Self::zeros(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |m: &mut Mat| {
            let bound = (6.0 / (m.rows + m.cols) as f64).sqrt();
            for w in &mut m.data {
                *w = rng.random_range(-bound..bound);
            }
        };
        fill(&mut model.conv.w);
        fill(&mut model.vdf_embed.w);
        fill(&mut model.loc_embed.w);
        for b in &mut model.blocks {
            for m in b.w_q.iter_mut().chain(b.w_k.iter_mut()).chain(b.w_v.iter_mut()) {
                fill(m);
            }
            fill(&mut b.w_o);
            fill(&mut b.ff1.w);
            fill(&mut b.ff2.w);
        }
        for a in &mut model.head {
            fill(&mut a.w);
        }
        model
    }

    /// Deterministic forward pass. `vdf` is the raw G x 4 feature; the
    /// azimuth column is scaled by 1/pi here so all encoder inputs are O(1).
    pub fn forward(&self, vdf: &[f64], loc: [f64; 2]) -> Cache {
        let g = self.spec.grid_rows;
        assert_eq!(vdf.len(), g * 4, "VDF shape mismatch");
        let mut vdf_scaled = vdf.to_vec();
        for row in vdf_scaled.chunks_exact_mut(4) {
            row[3] /= PI;
        }

        let mut conv_pre = Vec::with_capacity(g);
        for row in vdf_scaled.chunks_exact(4) {
            conv_pre.push(dot(row, &self.conv.w.data) + self.conv.b[0]);
        }
        let conv_act: Vec<f64> = conv_pre.iter().map(|&x| relu(x)).collect();

        let mut f = self.vdf_embed.forward(&conv_act);
        let mut u = self.loc_embed.forward(&loc);

        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let x = [u.clone(), f.clone()];
            let d = block.w_q[0].cols;
            let mut concat = [
                Vec::with_capacity(self.spec.heads * d),
                Vec::with_capacity(self.spec.heads * d),
            ];
            let mut heads = Vec::with_capacity(self.spec.heads);
            for j in 0..self.spec.heads {
                let (out, cache) =
                    head_forward(&x[0], &x[1], &block.w_q[j], &block.w_k[j], &block.w_v[j]);
                concat[0].extend_from_slice(&out[0]);
                concat[1].extend_from_slice(&out[1]);
                heads.push(cache);
            }
            let proj = [block.w_o.vecmat(&concat[0]), block.w_o.vecmat(&concat[1])];
            let mut res = x.clone();
            add_assign(&mut res[0], &proj[0]);
            add_assign(&mut res[1], &proj[1]);

            let ff_pre = [block.ff1.forward(&res[0]), block.ff1.forward(&res[1])];
            let ff_act = [
                ff_pre[0].iter().map(|&v| relu(v)).collect::<Vec<_>>(),
                ff_pre[1].iter().map(|&v| relu(v)).collect::<Vec<_>>(),
            ];
            let mut out = res.clone();
            add_assign(&mut out[0], &block.ff2.forward(&ff_act[0]));
            add_assign(&mut out[1], &block.ff2.forward(&ff_act[1]));

            u = out[0].clone();
            f = out[1].clone();
            blocks.push(BlockCache { x, heads, concat, res, ff_pre, ff_act });
        }

        // fuse and classify
        let mut sum = u;
        add_assign(&mut sum, &f);
        let mut head_inputs = vec![sum];
        let mut head_pre = Vec::with_capacity(self.head.len());
        for (i, layer) in self.head.iter().enumerate() {
            let pre = layer.forward(head_inputs.last().unwrap());
            if i + 1 < self.head.len() {
                head_inputs.push(pre.iter().map(|&v| relu(v)).collect());
            }
            head_pre.push(pre);
        }
        let logits = head_pre.last().unwrap().clone();
        Cache { vdf_scaled, loc, conv_pre, conv_act, blocks, head_inputs, head_pre, logits }
    }

    pub fn logits(&self, vdf: &[f64], loc: [f64; 2]) -> Vec<f64> {
        self.forward(vdf, loc).logits
    }

    /// Classes ranked by descending logit, ties toward the lower index.
    pub fn rank_classes(&self, vdf: &[f64], loc: [f64; 2]) -> Vec<usize> {
        let logits = self.logits(vdf, loc);
        let mut idx: Vec<usize> = (0..logits.len()).collect();
        idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
        idx
    }

    /// Accumulate parameter gradients for one sample into `grads`, given
    /// the loss gradient w.r.t. the logits.
    pub fn backward(&self, cache: &Cache, dlogits: &[f64], grads: &mut VdbanModel) {
        // MLP head
        let mut g = dlogits.to_vec();
        for i in (0..self.head.len()).rev() {
            let dx = self.head[i].backward(&cache.head_inputs[i], &g, &mut grads.head[i]);
            if i > 0 {
                g = dx
                    .iter()
                    .zip(&cache.head_pre[i - 1])
                    .map(|(&d, &pre)| if pre > 0.0 { d } else { 0.0 })
                    .collect();
            } else {
                g = dx;
            }
        }
        // the fused sum feeds both streams
        let mut du = g.clone();
        let mut df = g;

        for bi in (0..self.blocks.len()).rev() {
            let block = &self.blocks[bi];
            let bc = &cache.blocks[bi];
            let gblock = &mut grads.blocks[bi];
            let d_out = [du, df];
            // feed-forward with residual, shared weights across streams
            let mut d_res = [d_out[0].clone(), d_out[1].clone()];
            for s in 0..2 {
                let d_hid_act = block.ff2.backward(&bc.ff_act[s], &d_out[s], &mut gblock.ff2);
                let d_hid_pre: Vec<f64> = d_hid_act
                    .iter()
                    .zip(&bc.ff_pre[s])
                    .map(|(&d, &pre)| if pre > 0.0 { d } else { 0.0 })
                    .collect();
                let dr = block.ff1.backward(&bc.res[s], &d_hid_pre, &mut gblock.ff1);
                add_assign(&mut d_res[s], &dr);
            }
            // output projection with residual
            let mut dx = [d_res[0].clone(), d_res[1].clone()];
            let mut d_concat = [Vec::new(), Vec::new()];
            for s in 0..2 {
                gblock.w_o.outer_add(&bc.concat[s], &d_res[s]);
                d_concat[s] = block.w_o.matvec(&d_res[s]);
            }
            // heads
            let d = block.w_q[0].cols;
            let scale = 1.0 / (d as f64).sqrt();
            for (j, hc) in bc.heads.iter().enumerate() {
                let d_out_head =
                    [&d_concat[0][j * d..(j + 1) * d], &d_concat[1][j * d..(j + 1) * d]];
                // value mixing
                let mut da = [[0.0; 2]; 2];
                let mut dv = [vec![0.0; d], vec![0.0; d]];
                for i in 0..2 {
                    for jj in 0..2 {
                        da[i][jj] = dot(d_out_head[i], &hc.v[jj]);
                        for t in 0..d {
                            dv[jj][t] += hc.a[i][jj] * d_out_head[i][t];
                        }
                    }
                }
                // softmax rows, then the 1/sqrt(d) score scale
                let mut ds = [[0.0; 2]; 2];
                for i in 0..2 {
                    let inner = da[i][0] * hc.a[i][0] + da[i][1] * hc.a[i][1];
                    for jj in 0..2 {
                        ds[i][jj] = hc.a[i][jj] * (da[i][jj] - inner) * scale;
                    }
                }
                // scores -> queries and keys
                let mut dq = [vec![0.0; d], vec![0.0; d]];
                let mut dk = [vec![0.0; d], vec![0.0; d]];
                for i in 0..2 {
                    for jj in 0..2 {
                        for t in 0..d {
                            dq[i][t] += ds[i][jj] * hc.k[jj][t];
                            dk[jj][t] += ds[i][jj] * hc.q[i][t];
                        }
                    }
                }
                for s in 0..2 {
                    gblock.w_q[j].outer_add(&bc.x[s], &dq[s]);
                    gblock.w_k[j].outer_add(&bc.x[s], &dk[s]);
                    gblock.w_v[j].outer_add(&bc.x[s], &dv[s]);
                    add_assign(&mut dx[s], &block.w_q[j].matvec(&dq[s]));
                    add_assign(&mut dx[s], &block.w_k[j].matvec(&dk[s]));
                    add_assign(&mut dx[s], &block.w_v[j].matvec(&dv[s]));
                }
            }
            let [a, b] = dx;
            du = a;
            df = b;
        }

        // encoders
        self.loc_embed.backward(&cache.loc, &du, &mut grads.loc_embed);
        let d_conv_act = self.vdf_embed.backward(&cache.conv_act, &df, &mut grads.vdf_embed);
        for ((row, &pre), &d_act) in
            cache.vdf_scaled.chunks_exact(4).zip(&cache.conv_pre).zip(&d_conv_act)
        {
            let d_pre = if pre > 0.0 { d_act } else { 0.0 };
            for c in 0..4 {
                grads.conv.w.data[c] += row[c] * d_pre;
            }
            grads.conv.b[0] += d_pre;
        }
    }

    /// Loss and gradient accumulation for one sample; returns the loss.
    pub fn accumulate_sample(&self, sample: &Sample, grads: &mut VdbanModel) -> f64 {
        let cache = self.forward(&sample.vdf, sample.loc);
        let (loss, dlogits) = super::softmax_cross_entropy(&cache.logits, sample.label);
        self.backward(&cache, &dlogits, grads);
        loss
    }

    /// Named parameter tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("conv.w".into(), &self.conv.w.data[..]),
            ("conv.b".into(), &self.conv.b[..]),
            ("vdf_embed.w".into(), &self.vdf_embed.w.data[..]),
            ("vdf_embed.b".into(), &self.vdf_embed.b[..]),
            ("loc_embed.w".into(), &self.loc_embed.w.data[..]),
            ("loc_embed.b".into(), &self.loc_embed.b[..]),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for j in 0..b.w_q.len() {
                out.push((format!("block{i}.head{j}.w_q"), &b.w_q[j].data[..]));
                out.push((format!("block{i}.head{j}.w_k"), &b.w_k[j].data[..]));
                out.push((format!("block{i}.head{j}.w_v"), &b.w_v[j].data[..]));
            }
            out.push((format!("block{i}.w_o"), &b.w_o.data[..]));
            out.push((format!("block{i}.ff1.w"), &b.ff1.w.data[..]));
            out.push((format!("block{i}.ff1.b"), &b.ff1.b[..]));
            out.push((format!("block{i}.ff2.w"), &b.ff2.w.data[..]));
            out.push((format!("block{i}.ff2.b"), &b.ff2.b[..]));
        }
        for (i, a) in self.head.iter().enumerate() {
            out.push((format!("head{i}.w"), &a.w.data[..]));
            out.push((format!("head{i}.b"), &a.b[..]));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = vec![
            ("conv.w".into(), &mut self.conv.w.data[..]),
            ("conv.b".into(), &mut self.conv.b[..]),
            ("vdf_embed.w".into(), &mut self.vdf_embed.w.data[..]),
            ("vdf_embed.b".into(), &mut self.vdf_embed.b[..]),
            ("loc_embed.w".into(), &mut self.loc_embed.w.data[..]),
            ("loc_embed.b".into(), &mut self.loc_embed.b[..]),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let heads = b.w_q.len();
            let (wq, wk, wv) = (&mut b.w_q, &mut b.w_k, &mut b.w_v);
            // collect per-head tensors in q/k/v order
            let mut qkv: Vec<(String, &mut [f64])> = Vec::new();
            for (j, ((q, k), v)) in wq.iter_mut().zip(wk.iter_mut()).zip(wv.iter_mut()).enumerate()
            {
                qkv.push((format!("block{i}.head{j}.w_q"), &mut q.data[..]));
                qkv.push((format!("block{i}.head{j}.w_k"), &mut k.data[..]));
                qkv.push((format!("block{i}.head{j}.w_v"), &mut v.data[..]));
            }
            debug_assert_eq!(qkv.len(), 3 * heads);
            out.extend(qkv);
            out.push((format!("block{i}.w_o"), &mut b.w_o.data[..]));
            out.push((format!("block{i}.ff1.w"), &mut b.ff1.w.data[..]));
            out.push((format!("block{i}.ff1.b"), &mut b.ff1.b[..]));
            out.push((format!("block{i}.ff2.w"), &mut b.ff2.w.data[..]));
            out.push((format!("block{i}.ff2.b"), &mut b.ff2.b[..]));
        }
        for (i, a) in self.head.iter_mut().enumerate() {
            out.push((format!("head{i}.w"), &mut a.w.data[..]));
            out.push((format!("head{i}.b"), &mut a.b[..]));
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, t) in self.tensors() {
            out.extend_from_slice(t);
        }
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    pub fn add_assign(&mut self, other: &VdbanModel) {
        let mut flat = self.flatten();
        let of = other.flatten();
        add_assign(&mut flat, &of);
        self.set_from_flat(&flat);
    }
}
