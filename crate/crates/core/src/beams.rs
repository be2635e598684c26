//! DFT beam codebooks, achievable rate, exhaustive optimal-pair sweep, the
//! restricted beam-pair set, and Top-B selection support.
//!
//! Beam pairs are indexed transmit-major: pair `p` maps to
//! `(tx, rx) = (p / n_rx, p % n_rx)`, matching the enumeration of the full
//! pair set with the receive beam cycling fastest. Argmax ties are broken
//! toward the lowest pair index.

use crate::channel::{steering_vector, CMat, ChannelConfig, PathParam};
use crate::exec;
use num_complex::Complex64;
use std::f64::consts::PI;

/// A set of unit-norm beamforming vectors.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub beams: Vec<Vec<Complex64>>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }
}

/// DFT codebook over `n` antennas with `n_cb` beams: beam `b` (1-based)
/// steers to `pi * (2b - 2 - n_cb) / (2 n_cb)`.
pub fn dft_codebook(n: usize, n_cb: usize) -> Codebook {
    assert!(n_cb >= 1);
    let beams = (0..n_cb)
        .map(|i| {
            let phi = PI * (2.0 * i as f64 - n_cb as f64) / (2.0 * n_cb as f64);
            steering_vector(phi, n)
        })
        .collect();
    Codebook { beams }
}

#[inline]
pub fn pair_index(tx: usize, rx: usize, n_rx: usize) -> usize {
    tx * n_rx + rx
}

#[inline]
pub fn pair_from_index(p: usize, n_rx: usize) -> (usize, usize) {
    (p / n_rx, p % n_rx)
}

/// An ordered list of (tx, rx) beam index pairs; either the full set or the
/// restricted set of pairs observed as optimal across a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeamPairSet {
    pub pairs: Vec<(u32, u32)>,
}

impl BeamPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Position of a pair within the set, if present.
    pub fn position(&self, pair: (u32, u32)) -> Option<usize> {
        self.pairs.binary_search(&pair).ok()
    }

    /// Stable fingerprint used to bind checkpoints to the label space.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &(a, b) in &self.pairs {
            for v in [a, b] {
                h ^= v as u64;
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        }
        h
    }
}

/// Deduplicate and sort the optimal-pair labels observed over a dataset into
/// the restricted pair set. Labels are full-set pair indices.
pub fn restrict_pairs(labels: &[usize], n_rx: usize) -> BeamPairSet {
    assert!(!labels.is_empty(), "empty label list");
    let mut sorted: Vec<usize> = labels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let pairs = sorted
        .into_iter()
        .map(|p| {
            let (tx, rx) = pair_from_index(p, n_rx);
            (tx as u32, rx as u32)
        })
        .collect();
    BeamPairSet { pairs }
}

/// Average spectral efficiency of a beam pair over the K subcarriers,
/// `(1/K) sum_k log2(1 + snr |w_rx^H H_k w_tx|^2)`, in bits/s/Hz.
pub fn rate(h: &[CMat], w_tx: &[Complex64], w_rx: &[Complex64], cfg: &ChannelConfig) -> f64 {
    let snr = cfg.snr_linear();
    let mut sum = 0.0;
    for hk in h {
        let v = hk.matvec(w_tx);
        let mut z = Complex64::ZERO;
        for (w, x) in w_rx.iter().zip(&v) {
            z += w.conj() * x;
        }
        sum += (1.0 + snr * z.norm_sqr()).log2();
    }
    sum / h.len() as f64
}

/// Rates of every (tx, rx) codebook pair, transmit-major. Parallel over
/// transmit beams; the result is independent of scheduling.
pub fn rate_table(
    h: &[CMat],
    cb_tx: &Codebook,
    cb_rx: &Codebook,
    cfg: &ChannelConfig,
) -> Vec<f64> {
    let n_rx = cb_rx.len();
    let snr = cfg.snr_linear();
    let k_count = h.len() as f64;
    let per_tx: Vec<Vec<f64>> = exec::par_map_range(cb_tx.len(), |tx| {
        let down: Vec<Vec<Complex64>> = h.iter().map(|hk| hk.matvec(&cb_tx.beams[tx])).collect();
        let mut rates = vec![0.0; n_rx];
        for (rx, w_rx) in cb_rx.beams.iter().enumerate() {
            let mut sum = 0.0;
            for v in &down {
                let mut z = Complex64::ZERO;
                for (w, x) in w_rx.iter().zip(v) {
                    z += w.conj() * x;
                }
                sum += (1.0 + snr * z.norm_sqr()).log2();
            }
            rates[rx] = sum / k_count;
        }
        rates
    });
    let mut table = Vec::with_capacity(cb_tx.len() * n_rx);
    for row in per_tx {
        table.extend(row);
    }
    table
}

/// Rates of every codebook pair computed from path parameters without
/// materializing the channel matrices; identical (to rounding) to
/// [`rate_table`] over the assembled channel.
pub fn rate_table_from_paths(
    paths: &[PathParam],
    cb_tx: &Codebook,
    cb_rx: &Codebook,
    cfg: &ChannelConfig,
) -> Vec<f64> {
    let n_tx = cb_tx.len();
    let n_rx = cb_rx.len();
    let snr = cfg.snr_linear();
    let k_count = cfg.num_subcarriers;
    if paths.is_empty() {
        return vec![0.0; n_tx * n_rx];
    }
    let l = paths.len();
    // beam-space response of each path at both arrays
    let rx_resp: Vec<Vec<Complex64>> = paths
        .iter()
        .map(|p| {
            let a = steering_vector(p.aoa, cfg.num_ms_antennas);
            cb_rx
                .beams
                .iter()
                .map(|w| w.iter().zip(&a).map(|(wi, ai)| wi.conj() * ai).sum())
                .collect()
        })
        .collect();
    let tx_resp: Vec<Vec<Complex64>> = paths
        .iter()
        .map(|p| {
            let a = steering_vector(p.aod, cfg.num_bs_antennas);
            cb_tx
                .beams
                .iter()
                .map(|w| a.iter().zip(w).map(|(ai, wi)| ai.conj() * wi).sum())
                .collect()
        })
        .collect();
    let coeffs: Vec<Vec<Complex64>> = (0..k_count)
        .map(|k| {
            let f_k = k as f64 * cfg.subcarrier_spacing_hz;
            paths
                .iter()
                .map(|p| p.gain * Complex64::from_polar(1.0, -2.0 * PI * f_k * p.delay))
                .collect()
        })
        .collect();
    exec::par_map_range(n_tx * n_rx, |p| {
        let (tx, rx) = pair_from_index(p, n_rx);
        let mut sum = 0.0;
        for ck in &coeffs {
            let mut z = Complex64::ZERO;
            for li in 0..l {
                z += ck[li] * rx_resp[li][rx] * tx_resp[li][tx];
            }
            sum += (1.0 + snr * z.norm_sqr()).log2();
        }
        sum / k_count as f64
    })
}

/// Rates of a selected list of (tx, rx) pairs from path parameters, single
/// precision, in the given pair order. Used for the per-record tables over
/// the restricted pair set.
pub fn rate_table_for_pairs(
    paths: &[PathParam],
    pairs: &[(u32, u32)],
    cb_tx: &Codebook,
    cb_rx: &Codebook,
    cfg: &ChannelConfig,
) -> Vec<f32> {
    if paths.is_empty() {
        return vec![0.0; pairs.len()];
    }
    let snr = cfg.snr_linear();
    let k_count = cfg.num_subcarriers;
    let rx_resp: Vec<Vec<Complex64>> = paths
        .iter()
        .map(|p| {
            let a = steering_vector(p.aoa, cfg.num_ms_antennas);
            cb_rx
                .beams
                .iter()
                .map(|w| w.iter().zip(&a).map(|(wi, ai)| wi.conj() * ai).sum())
                .collect()
        })
        .collect();
    let tx_resp: Vec<Vec<Complex64>> = paths
        .iter()
        .map(|p| {
            let a = steering_vector(p.aod, cfg.num_bs_antennas);
            cb_tx
                .beams
                .iter()
                .map(|w| a.iter().zip(w).map(|(ai, wi)| ai.conj() * wi).sum())
                .collect()
        })
        .collect();
    let coeffs: Vec<Vec<Complex64>> = (0..k_count)
        .map(|k| {
            let f_k = k as f64 * cfg.subcarrier_spacing_hz;
            paths
                .iter()
                .map(|p| p.gain * Complex64::from_polar(1.0, -2.0 * PI * f_k * p.delay))
                .collect()
        })
        .collect();
    pairs
        .iter()
        .map(|&(tx, rx)| {
            let mut sum = 0.0;
            for ck in &coeffs {
                let mut z = Complex64::ZERO;
                for li in 0..paths.len() {
                    z += ck[li] * rx_resp[li][rx as usize] * tx_resp[li][tx as usize];
                }
                sum += (1.0 + snr * z.norm_sqr()).log2();
            }
            (sum / k_count as f64) as f32
        })
        .collect()
}

/// Lowest-index argmax.
pub fn argmax_with_tie(table: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in table.iter().enumerate() {
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    (best, best_val)
}

/// Exhaustive sweep over all codebook pairs; returns the pair index and its
/// rate, ties broken toward the lowest index.
pub fn sweep_optimal(
    h: &[CMat],
    cb_tx: &Codebook,
    cb_rx: &Codebook,
    cfg: &ChannelConfig,
) -> (usize, f64) {
    assert!(!cb_tx.is_empty() && !cb_rx.is_empty());
    argmax_with_tie(&rate_table(h, cb_tx, cb_rx, cfg))
}

/// Best rate among the first `b` entries of a ranked pair list: the rate the
/// system achieves after sweeping the Top-B candidates and keeping the best.
/// A `b` beyond the ranking length uses the whole ranking.
pub fn top_b_rate(
    h: &[CMat],
    ranked_pairs: &[(u32, u32)],
    b: usize,
    cb_tx: &Codebook,
    cb_rx: &Codebook,
    cfg: &ChannelConfig,
) -> f64 {
    assert!(b >= 1);
    ranked_pairs
        .iter()
        .take(b)
        .map(|&(tx, rx)| {
            rate(h, &cb_tx.beams[tx as usize], &cb_rx.beams[rx as usize], cfg)
        })
        .fold(0.0, f64::max)
}

/// Table-backed variant of [`top_b_rate`]: `ranked` holds positions into a
/// per-record rate table over the restricted pair set.
pub fn top_b_rate_from_table(table: &[f32], ranked: &[usize], b: usize) -> Option<f64> {
    let mut best: Option<f64> = None;
    for &idx in ranked.iter().take(b.max(1)) {
        let v = *table.get(idx)? as f64;
        best = Some(best.map_or(v, |cur| cur.max(v)));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{assemble_channel, PathKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_snr_cfg(nb: usize, nu: usize, k: usize) -> ChannelConfig {
        ChannelConfig {
            num_bs_antennas: nb,
            num_ms_antennas: nu,
            num_subcarriers: k,
            noise_power: 1.0,
            per_subcarrier_power: 1.0,
            ..Default::default()
        }
    }

    fn random_channel(rng: &mut ChaCha8Rng, cfg: &ChannelConfig) -> Vec<CMat> {
        let paths: Vec<PathParam> = (0..4)
            .map(|_| PathParam {
                gain: Complex64::from_polar(
                    rng.random_range(0.1..1.0),
                    rng.random_range(-PI..PI),
                ),
                delay: rng.random_range(0.0..5e-7),
                aoa: rng.random_range(-1.5..1.5),
                aod: rng.random_range(-1.5..1.5),
                kind: PathKind::FaceReflection,
            })
            .collect();
        assemble_channel(&paths, cfg)
    }

    #[test]
    fn codebook_center_beam_is_broadside() {
        let cb = dft_codebook(64, 64);
        // b = 33 -> angle argument zero -> all-ones beam
        let scale = 1.0 / 8.0;
        for z in &cb.beams[32] {
            assert!((z - Complex64::new(scale, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn codebook_first_beam_alternates() {
        let cb = dft_codebook(64, 64);
        // b = 1 -> angle -pi/2 -> phase ramp e^{-j pi m}
        for (m, z) in cb.beams[0].iter().enumerate() {
            let expect = Complex64::from_polar(1.0 / 8.0, -PI * m as f64);
            assert!((z - expect).norm() < 1e-9);
        }
    }

    #[test]
    fn codebook_unit_norm_and_distinct() {
        let cb = dft_codebook(64, 128);
        for beam in &cb.beams {
            let n: f64 = beam.iter().map(|z| z.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        for i in 0..cb.len() {
            for j in (i + 1)..cb.len() {
                let diff: f64 = cb.beams[i]
                    .iter()
                    .zip(&cb.beams[j])
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum();
                assert!(diff > 1e-9, "beams {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn rate_zero_channel() {
        let cfg = unit_snr_cfg(4, 4, 4);
        let h: Vec<CMat> = (0..4).map(|_| CMat::zeros(4, 4)).collect();
        let w = steering_vector(0.3, 4);
        assert_eq!(rate(&h, &w, &w, &cfg), 0.0);
    }

    #[test]
    fn rate_matched_rank_one_unit_snr() {
        let cfg = unit_snr_cfg(8, 8, 4);
        let paths = vec![PathParam {
            gain: Complex64::new(1.0, 0.0),
            delay: 0.0,
            aoa: 0.4,
            aod: -0.7,
            kind: PathKind::Los,
        }];
        let h = assemble_channel(&paths, &cfg);
        let w_rx = steering_vector(0.4, 8);
        let w_tx = steering_vector(-0.7, 8);
        let r = rate(&h, &w_tx, &w_rx, &cfg);
        assert!((r - 1.0).abs() < 1e-12, "rate = {r}");
    }

    #[test]
    fn rate_matches_scalar_reimplementation() {
        let cfg = unit_snr_cfg(8, 8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_channel(&mut rng, &cfg);
        let w_tx = steering_vector(0.2, 8);
        let w_rx = steering_vector(-0.4, 8);
        // independent evaluation of the same formula
        let snr = cfg.snr_linear();
        let mut expect = 0.0;
        for hk in &h {
            let mut z = Complex64::ZERO;
            for r in 0..8 {
                for c in 0..8 {
                    z += w_rx[r].conj() * hk.at(r, c) * w_tx[c];
                }
            }
            expect += (1.0 + snr * z.norm_sqr()).log2();
        }
        expect /= h.len() as f64;
        assert!((rate(&h, &w_tx, &w_rx, &cfg) - expect).abs() < 1e-12);
    }

    #[test]
    fn rate_invariant_to_unit_phase() {
        let cfg = unit_snr_cfg(8, 8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_channel(&mut rng, &cfg);
        let w_tx = steering_vector(0.9, 8);
        let w_rx = steering_vector(-0.2, 8);
        let base = rate(&h, &w_tx, &w_rx, &cfg);
        let spin = Complex64::from_polar(1.0, 1.234);
        let w_tx2: Vec<Complex64> = w_tx.iter().map(|z| z * spin).collect();
        let w_rx2: Vec<Complex64> =
            w_rx.iter().map(|z| z * Complex64::from_polar(1.0, -0.777)).collect();
        assert!((rate(&h, &w_tx2, &w_rx2, &cfg) - base).abs() < 1e-12);
    }

    #[test]
    fn sweep_finds_on_grid_path() {
        let cfg = unit_snr_cfg(16, 16, 4);
        let cb_tx = dft_codebook(16, 16);
        let cb_rx = dft_codebook(16, 16);
        // plant a single path exactly on codebook angles (b*, u*) = (11, 3)
        let aod = PI * (2.0 * 11.0 - 16.0) / 32.0;
        let aoa = PI * (2.0 * 3.0 - 16.0) / 32.0;
        let paths = vec![PathParam {
            gain: Complex64::new(1.0, 0.0),
            delay: 1e-7,
            aoa,
            aod,
            kind: PathKind::Los,
        }];
        let h = assemble_channel(&paths, &cfg);
        let (best, best_rate) = sweep_optimal(&h, &cb_tx, &cb_rx, &cfg);
        assert_eq!(pair_from_index(best, 16), (11, 3));
        let table = rate_table(&h, &cb_tx, &cb_rx, &cfg);
        for &v in &table {
            assert!(best_rate >= v);
        }
    }

    #[test]
    fn sweep_zero_channel_tie_break() {
        let cfg = unit_snr_cfg(4, 4, 2);
        let h: Vec<CMat> = (0..2).map(|_| CMat::zeros(4, 4)).collect();
        let cb = dft_codebook(4, 4);
        let (best, r) = sweep_optimal(&h, &cb, &cb, &cfg);
        assert_eq!(best, 0);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn sweep_matches_independent_double_loop() {
        let cfg = unit_snr_cfg(8, 8, 4);
        let cb_tx = dft_codebook(8, 8);
        let cb_rx = dft_codebook(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let h = random_channel(&mut rng, &cfg);
            let (fast_idx, fast_rate) = sweep_optimal(&h, &cb_tx, &cb_rx, &cfg);
            let mut best_idx = 0;
            let mut best = f64::NEG_INFINITY;
            for (tx, w_tx) in cb_tx.beams.iter().enumerate() {
                for (rx, w_rx) in cb_rx.beams.iter().enumerate() {
                    let mut sum = 0.0;
                    for hk in &h {
                        let mut v = vec![Complex64::ZERO; 8];
                        for row in 0..8 {
                            for col in 0..8 {
                                v[row] += hk.at(row, col) * w_tx[col];
                            }
                        }
                        let mut z = Complex64::ZERO;
                        for row in 0..8 {
                            z += w_rx[row].conj() * v[row];
                        }
                        sum += (1.0 + cfg.snr_linear() * z.norm_sqr()).log2();
                    }
                    sum /= h.len() as f64;
                    if sum > best {
                        best = sum;
                        best_idx = pair_index(tx, rx, 8);
                    }
                }
            }
            assert_eq!(fast_idx, best_idx);
            assert_eq!(fast_rate, best);
        }
    }

    #[test]
    fn table_from_paths_matches_assembled() {
        let cfg = unit_snr_cfg(8, 8, 4);
        let cb = dft_codebook(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let paths: Vec<PathParam> = (0..3)
            .map(|_| PathParam {
                gain: Complex64::from_polar(
                    rng.random_range(0.01..0.5),
                    rng.random_range(-PI..PI),
                ),
                delay: rng.random_range(0.0..3e-7),
                aoa: rng.random_range(-1.5..1.5),
                aod: rng.random_range(-1.5..1.5),
                kind: PathKind::FaceReflection,
            })
            .collect();
        let via_paths = rate_table_from_paths(&paths, &cb, &cb, &cfg);
        let via_matrix = rate_table(&assemble_channel(&paths, &cfg), &cb, &cb, &cfg);
        for (a, b) in via_paths.iter().zip(&via_matrix) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn restrict_pairs_dedups() {
        let set = restrict_pairs(&[5, 5, 7], 64);
        assert_eq!(set.len(), 2);
        assert_eq!(set.pairs, vec![(0, 5), (0, 7)]);
        assert_eq!(set.position((0, 7)), Some(1));

        let single = restrict_pairs(&[130, 130, 130], 64);
        assert_eq!(single.len(), 1);
        assert_eq!(single.pairs, vec![(2, 2)]);
    }

    #[test]
    fn top_b_examples() {
        let cfg = unit_snr_cfg(8, 8, 4);
        let cb = dft_codebook(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_channel(&mut rng, &cfg);
        let table = rate_table(&h, &cb, &cb, &cfg);
        let (opt_idx, opt_rate) = argmax_with_tie(&table);
        let opt_pair = pair_from_index(opt_idx, 8);
        let opt_pair = (opt_pair.0 as u32, opt_pair.1 as u32);

        // ranking with the oracle pair placed third
        let mut ranked: Vec<(u32, u32)> = vec![(0, 1), (1, 0), opt_pair, (2, 2), (3, 3)];
        assert_eq!(top_b_rate(&h, &ranked, 5, &cb, &cb, &cfg), opt_rate);
        let r1 = top_b_rate(&h, &ranked, 1, &cb, &cb, &cfg);
        assert_eq!(r1, rate(&h, &cb.beams[0], &cb.beams[1], &cfg));
        // b beyond the ranking length uses the whole ranking
        assert_eq!(
            top_b_rate(&h, &ranked, 99, &cb, &cb, &cfg),
            top_b_rate(&h, &ranked, 5, &cb, &cb, &cfg)
        );

        // full-set ranking reaches the oracle rate, and Top-B is monotone
        ranked = (0..64).map(|p| pair_from_index(p, 8)).map(|(a, b)| (a as u32, b as u32)).collect();
        assert_eq!(top_b_rate(&h, &ranked, 64, &cb, &cb, &cfg), opt_rate);
        let mut prev = 0.0;
        for b in 1..=64 {
            let v = top_b_rate(&h, &ranked, b, &cb, &cb, &cfg);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn top_b_from_table() {
        let table = vec![0.5f32, 2.0, 1.0];
        assert_eq!(top_b_rate_from_table(&table, &[0, 1, 2], 1), Some(0.5));
        assert_eq!(top_b_rate_from_table(&table, &[0, 1, 2], 2), Some(2.0));
        assert_eq!(top_b_rate_from_table(&table, &[9], 1), None);
    }
}
