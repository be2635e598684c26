//! Geometry-consistent multipath synthesis.
//!
//! Candidate paths are the unblocked line of sight, the ground bounce, and
//! first-order specular reflections off every visible cuboid face, found by
//! the image method with both legs blockage-tested. Per-path gains follow the
//! free-space law scaled by a per-material reflection coefficient, with a pi
//! phase shift per bounce. Paths are sorted by gain and truncated to
//! `max_paths`, then expanded into per-subcarrier channel matrices.
//!
//! Arrays are azimuth-only ULAs: elevation shapes path lengths and blockage
//! but not steering.

use crate::geometry::{segment_blocked, Cuboid, Vec3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Surface class of a reflector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Material {
    Metal,
    Concrete,
}

/// A reflecting/blocking body in the scene.
#[derive(Debug, Clone, Copy)]
pub struct Obstacle {
    pub shape: Cuboid,
    pub material: Material,
}

/// Channel model parameters. `noise_power` is calibrated from generated data
/// by the pipeline (see [`crate::pipeline`]); the serialized default is a
/// placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub carrier_hz: f64,
    pub num_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    pub num_bs_antennas: usize,
    pub num_ms_antennas: usize,
    /// Cyclic prefix length of the tap-domain reference form.
    pub cyclic_prefix_len: usize,
    /// 0 disables reflections entirely; the tracer implements first order.
    pub max_reflections: usize,
    pub max_paths: usize,
    /// Reflection coefficient magnitudes per material class. The ground is
    /// treated as concrete.
    pub reflection_metal: f64,
    pub reflection_concrete: f64,
    /// Noise variance per subcarrier, watts.
    pub noise_power: f64,
    /// Transmit power per subcarrier, watts (equal across subcarriers).
    pub per_subcarrier_power: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            carrier_hz: 28e9,
            num_subcarriers: 16,
            subcarrier_spacing_hz: 1e6,
            num_bs_antennas: 64,
            num_ms_antennas: 64,
            cyclic_prefix_len: 16,
            max_reflections: 1,
            max_paths: 5,
            reflection_metal: 0.9,
            reflection_concrete: 0.6,
            noise_power: 1e-12,
            per_subcarrier_power: 1.0,
        }
    }
}

impl ChannelConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Sampling interval of the tap-domain form, `1 / (K * spacing)`.
    pub fn sampling_interval(&self) -> f64 {
        1.0 / (self.num_subcarriers as f64 * self.subcarrier_spacing_hz)
    }

    pub fn snr_linear(&self) -> f64 {
        self.per_subcarrier_power / self.noise_power
    }

    fn reflection_coeff(&self, material: Material) -> f64 {
        match material {
            Material::Metal => self.reflection_metal,
            Material::Concrete => self.reflection_concrete,
        }
    }
}

/// How a path reached the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    Los,
    GroundReflection,
    FaceReflection,
}

impl PathKind {
    pub fn code(self) -> u8 {
        match self {
            PathKind::Los => 0,
            PathKind::GroundReflection => 1,
            PathKind::FaceReflection => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(PathKind::Los),
            1 => Some(PathKind::GroundReflection),
            2 => Some(PathKind::FaceReflection),
            _ => None,
        }
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParam {
    pub gain: Complex64,
    /// Propagation delay, seconds.
    pub delay: f64,
    /// Azimuth of the arriving leg at the MS array, radians.
    pub aoa: f64,
    /// Azimuth of the departing leg at the RSU array, radians.
    pub aod: f64,
    pub kind: PathKind,
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![Complex64::ZERO; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `self * x` for a column vector `x`.
    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![Complex64::ZERO; self.rows];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = Complex64::ZERO;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            out[r] = acc;
        }
        out
    }
}

/// Half-wavelength ULA steering vector,
/// `(1/sqrt(n)) [1, e^{j pi sin(phi)}, ..., e^{j (n-1) pi sin(phi)}]`.
pub fn steering_vector(phi: f64, n: usize) -> Vec<Complex64> {
    assert!(n >= 1);
    let scale = 1.0 / (n as f64).sqrt();
    let step = PI * phi.sin();
    (0..n)
        .map(|m| Complex64::from_polar(scale, step * m as f64))
        .collect()
}

/// Azimuth of the leg from `from` toward `to` as seen by a ULA laid along
/// the +Y axis: `asin` of the Y component of the normalized horizontal
/// direction. Vertical legs steer broadside.
fn ula_angle(from: Vec3, to: Vec3) -> f64 {
    let d = to - from;
    let h = d.x.hypot(d.y);
    if h == 0.0 {
        0.0
    } else {
        (d.y / h).asin()
    }
}

fn friis_path(
    cfg: &ChannelConfig,
    total_len: f64,
    reflections: u32,
    coeff: f64,
    aoa: f64,
    aod: f64,
    kind: PathKind,
) -> PathParam {
    let lambda = cfg.wavelength();
    let mag = lambda / (4.0 * PI * total_len) * coeff;
    let phase = -2.0 * PI * total_len / lambda + PI * reflections as f64;
    PathParam {
        gain: Complex64::from_polar(mag, phase),
        delay: total_len / SPEED_OF_LIGHT,
        aoa,
        aod,
        kind,
    }
}

/// Trace candidate paths from `tx` (RSU array) to `rx` (MS array) through
/// the obstacle set. Returns paths sorted by descending gain magnitude,
/// truncated to `max_paths`; empty on full outage.
pub fn trace_paths(
    obstacles: &[Obstacle],
    tx: Vec3,
    rx: Vec3,
    cfg: &ChannelConfig,
) -> Vec<PathParam> {
    assert!(tx != rx, "tx and rx coincide");
    let shapes: Vec<Cuboid> = obstacles.iter().map(|o| o.shape).collect();
    let mut paths = Vec::new();

    if !segment_blocked(tx, rx, &shapes) {
        let d = (rx - tx).norm();
        paths.push(friis_path(
            cfg,
            d,
            0,
            1.0,
            ula_angle(rx, tx),
            ula_angle(tx, rx),
            PathKind::Los,
        ));
    }

    if cfg.max_reflections >= 1 {
        // ground bounce via the image of tx in the z = 0 plane
        if tx.z > 0.0 && rx.z > 0.0 {
            let image = Vec3::new(tx.x, tx.y, -tx.z);
            let s = image.z / (image.z - rx.z);
            let p = image + (rx - image) * s;
            if !segment_blocked(tx, p, &shapes) && !segment_blocked(p, rx, &shapes) {
                let d = (rx - image).norm();
                paths.push(friis_path(
                    cfg,
                    d,
                    1,
                    cfg.reflection_concrete,
                    ula_angle(rx, p),
                    ula_angle(tx, p),
                    PathKind::GroundReflection,
                ));
            }
        }

        for (oi, obstacle) in obstacles.iter().enumerate() {
            let coeff = cfg.reflection_coeff(obstacle.material);
            for face in obstacle.shape.faces() {
                let s_tx = (tx - face.center).dot(face.normal);
                let s_rx = (rx - face.center).dot(face.normal);
                if s_tx <= 0.0 || s_rx <= 0.0 {
                    continue;
                }
                let image = tx - face.normal * (2.0 * s_tx);
                let s = s_tx / (s_tx + s_rx);
                let p = image + (rx - image) * s;
                if !face.contains(p) {
                    continue;
                }
                // both legs tested against everything but the reflector
                let blocked = shapes
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != oi)
                    .any(|(_, c)| c.segment_enters(tx, p) || c.segment_enters(p, rx));
                if blocked {
                    continue;
                }
                let d = (rx - image).norm();
                paths.push(friis_path(
                    cfg,
                    d,
                    1,
                    coeff,
                    ula_angle(rx, p),
                    ula_angle(tx, p),
                    PathKind::FaceReflection,
                ));
            }
        }
    }

    paths.sort_by(|a, b| b.gain.norm_sqr().total_cmp(&a.gain.norm_sqr()));
    paths.truncate(cfg.max_paths);
    paths
}

/// True iff the direct tx-rx segment is unblocked.
pub fn los_status(obstacles: &[Obstacle], tx: Vec3, rx: Vec3) -> bool {
    let shapes: Vec<Cuboid> = obstacles.iter().map(|o| o.shape).collect();
    !segment_blocked(tx, rx, &shapes)
}

/// Expand paths into the K per-subcarrier channel matrices
/// `H_k = sum_l gain_l e^{-j 2 pi f_k delay_l} a_r(aoa_l) a_t(aod_l)^H`
/// with `f_k = k * subcarrier_spacing`, `k = 0..K-1`.
pub fn assemble_channel(paths: &[PathParam], cfg: &ChannelConfig) -> Vec<CMat> {
    let (nu, nb, k_count) = (cfg.num_ms_antennas, cfg.num_bs_antennas, cfg.num_subcarriers);
    let mut out: Vec<CMat> = (0..k_count).map(|_| CMat::zeros(nu, nb)).collect();
    for path in paths {
        let a_r = steering_vector(path.aoa, nu);
        let a_t = steering_vector(path.aod, nb);
        for (k, h) in out.iter_mut().enumerate() {
            let f_k = k as f64 * cfg.subcarrier_spacing_hz;
            let c = path.gain * Complex64::from_polar(1.0, -2.0 * PI * f_k * path.delay);
            for (r, ar) in a_r.iter().enumerate() {
                let row = &mut h.data[r * nb..(r + 1) * nb];
                let left = c * ar;
                for (val, at) in row.iter_mut().zip(&a_t) {
                    *val += left * at.conj();
                }
            }
        }
    }
    out
}

/// `sum_k ||H_k||_F^2` computed from path parameters alone via the Gram
/// matrices of the steering vectors; avoids materializing the channel.
pub fn channel_frobenius_sq(paths: &[PathParam], cfg: &ChannelConfig) -> f64 {
    if paths.is_empty() {
        return 0.0;
    }
    let l = paths.len();
    let a_r: Vec<Vec<Complex64>> =
        paths.iter().map(|p| steering_vector(p.aoa, cfg.num_ms_antennas)).collect();
    let a_t: Vec<Vec<Complex64>> =
        paths.iter().map(|p| steering_vector(p.aod, cfg.num_bs_antennas)).collect();
    let inner = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
        // a^H b
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    };
    let mut total = 0.0;
    for k in 0..cfg.num_subcarriers {
        let f_k = k as f64 * cfg.subcarrier_spacing_hz;
        let coeffs: Vec<Complex64> = paths
            .iter()
            .map(|p| p.gain * Complex64::from_polar(1.0, -2.0 * PI * f_k * p.delay))
            .collect();
        let mut acc = Complex64::ZERO;
        for i in 0..l {
            for j in 0..l {
                // tr((c_j u_j v_j^H)^H (c_i u_i v_i^H)) = c_i conj(c_j) (u_j^H u_i)(v_i^H v_j)
                acc += coeffs[i]
                    * coeffs[j].conj()
                    * inner(&a_r[j], &a_r[i])
                    * inner(&a_t[i], &a_t[j]);
            }
        }
        total += acc.re;
    }
    total
}

/// One traced snapshot: paths, the assembled per-subcarrier matrices, and
/// the LOS flag.
#[derive(Debug, Clone)]
pub struct ChannelSnapshot {
    pub paths: Vec<PathParam>,
    pub h_per_subcarrier: Vec<CMat>,
    pub los_flag: bool,
}

impl ChannelSnapshot {
    pub fn trace(obstacles: &[Obstacle], tx: Vec3, rx: Vec3, cfg: &ChannelConfig) -> Self {
        let paths = trace_paths(obstacles, tx, rx, cfg);
        let los_flag = paths.iter().any(|p| p.kind == PathKind::Los);
        let h_per_subcarrier = assemble_channel(&paths, cfg);
        ChannelSnapshot { paths, h_per_subcarrier, los_flag }
    }
}

/// Serialize one snapshot in the channel dump layout: a header
/// `(q: u32, r: u32, los: u8, path count: u32)`, then per path six little-
/// endian f64 (gain re, gain im, delay, aoa, aod, kind code), then
/// `K * N_U * N_B` complex little-endian f32 values, row-major within each
/// matrix, subcarrier-major overall.
pub fn write_channel_dump(
    w: &mut impl Write,
    q: u32,
    r: u32,
    snapshot: &ChannelSnapshot,
) -> std::io::Result<()> {
    w.write_all(&q.to_le_bytes())?;
    w.write_all(&r.to_le_bytes())?;
    w.write_all(&[snapshot.los_flag as u8])?;
    w.write_all(&(snapshot.paths.len() as u32).to_le_bytes())?;
    for p in &snapshot.paths {
        for v in [p.gain.re, p.gain.im, p.delay, p.aoa, p.aod, p.kind.code() as f64] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for h in &snapshot.h_per_subcarrier {
        for z in &h.data {
            w.write_all(&(z.re as f32).to_le_bytes())?;
            w.write_all(&(z.im as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_cfg() -> ChannelConfig {
        ChannelConfig { num_bs_antennas: 8, num_ms_antennas: 8, ..Default::default() }
    }

    #[test]
    fn steering_broadside_all_ones() {
        let v = steering_vector(0.0, 4);
        for z in &v {
            assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn steering_endfire_alternates() {
        let v = steering_vector(PI / 2.0, 2);
        let s = 1.0 / 2.0f64.sqrt();
        assert!((v[0] - Complex64::new(s, 0.0)).norm() < 1e-12);
        assert!((v[1] - Complex64::new(-s, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let v = steering_vector(rng.random_range(-1.5..1.5), 64);
            let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn free_space_gives_los_plus_ground() {
        let cfg = test_cfg();
        let tx = Vec3::new(0.0, 0.0, 2.0);
        let rx = Vec3::new(20.0, 0.0, 2.0);
        let paths = trace_paths(&[], tx, rx, &cfg);
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].kind, PathKind::Los);
        assert_eq!(paths[1].kind, PathKind::GroundReflection);
        let expected = cfg.wavelength() / (4.0 * PI * 20.0);
        assert!((paths[0].gain.norm() - expected).abs() / expected < 1e-12);
        assert!((paths[0].delay - 20.0 / SPEED_OF_LIGHT).abs() < 1e-18);
    }

    #[test]
    fn wall_blocks_los() {
        let cfg = test_cfg();
        let tx = Vec3::new(0.0, 0.0, 2.0);
        let rx = Vec3::new(20.0, 0.0, 2.0);
        let wall = Obstacle {
            shape: Cuboid::new(Vec3::new(10.0, 0.0, 2.0), 8.0, 1.0, 4.0, 0.0),
            material: Material::Metal,
        };
        let paths = trace_paths(&[wall], tx, rx, &cfg);
        assert!(paths.iter().all(|p| p.kind != PathKind::Los));
    }

    #[test]
    fn wall_reflection_delay_matches_image_method() {
        let cfg = test_cfg();
        let tx = Vec3::new(0.0, 0.0, 2.0);
        let rx = Vec3::new(10.0, 0.0, 2.0);
        // slab parallel to the tx-rx line; near face plane at y = 3
        let wall = Obstacle {
            shape: Cuboid::new(Vec3::new(5.0, 3.5, 2.5), 1.0, 20.0, 5.0, 0.0),
            material: Material::Concrete,
        };
        let paths = trace_paths(&[wall], tx, rx, &cfg);
        let refl = paths
            .iter()
            .find(|p| p.kind == PathKind::FaceReflection)
            .expect("missing wall reflection");
        // image of tx across y = 3 is (0, 6, 2)
        let d = (Vec3::new(0.0, 6.0, 2.0) - rx).norm();
        assert!((refl.delay - d / SPEED_OF_LIGHT).abs() / (d / SPEED_OF_LIGHT) < 1e-12);
        let expected_mag = cfg.wavelength() / (4.0 * PI * d) * cfg.reflection_concrete;
        assert!((refl.gain.norm() - expected_mag).abs() / expected_mag < 1e-12);
    }

    #[test]
    fn assemble_single_path_rank_one() {
        let cfg = test_cfg();
        let paths = vec![PathParam {
            gain: Complex64::new(1.0, 0.0),
            delay: 0.0,
            aoa: 0.0,
            aod: 0.0,
            kind: PathKind::Los,
        }];
        let h = assemble_channel(&paths, &cfg);
        assert_eq!(h.len(), cfg.num_subcarriers);
        let a_r = steering_vector(0.0, cfg.num_ms_antennas);
        let a_t = steering_vector(0.0, cfg.num_bs_antennas);
        for hk in &h {
            for r in 0..cfg.num_ms_antennas {
                for c in 0..cfg.num_bs_antennas {
                    let expect = a_r[r] * a_t[c].conj();
                    assert!((hk.at(r, c) - expect).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn assemble_empty_is_zero() {
        let cfg = test_cfg();
        let h = assemble_channel(&[], &cfg);
        assert!(h.iter().all(|m| m.frobenius_sq() == 0.0));
    }

    #[test]
    fn two_taps_oscillate_with_period_two() {
        let cfg = test_cfg();
        let half_span_delay = cfg.sampling_interval() * cfg.num_subcarriers as f64 / 2.0;
        let mk = |delay: f64| PathParam {
            gain: Complex64::new(1.0, 0.0),
            delay,
            aoa: 0.0,
            aod: 0.0,
            kind: PathKind::Los,
        };
        let h = assemble_channel(&[mk(0.0), mk(half_span_delay)], &cfg);
        // coefficients are 1 + e^{-j pi k}: alternately 2 and 0
        for (k, hk) in h.iter().enumerate() {
            let norm = hk.frobenius_sq().sqrt();
            if k % 2 == 0 {
                assert!((norm - 2.0).abs() < 1e-9, "k={k} norm={norm}");
            } else {
                assert!(norm < 1e-9, "k={k} norm={norm}");
            }
        }
    }

    #[test]
    fn los_status_examples() {
        let tx = Vec3::new(0.0, 0.0, 3.0);
        let rx = Vec3::new(10.0, 0.0, 1.6);
        assert!(los_status(&[], tx, rx));
        let bus = Obstacle {
            shape: Cuboid::new(Vec3::new(5.0, 0.0, 1.665), 11.08, 3.25, 3.33, PI / 2.0),
            material: Material::Metal,
        };
        assert!(!los_status(&[bus], tx, rx));
    }

    fn random_obstacles(rng: &mut ChaCha8Rng, n: usize) -> Vec<Obstacle> {
        (0..n)
            .map(|i| Obstacle {
                shape: Cuboid::new(
                    Vec3::new(
                        rng.random_range(-15.0..15.0),
                        rng.random_range(-15.0..15.0),
                        rng.random_range(0.5..2.0),
                    ),
                    rng.random_range(2.0..10.0),
                    rng.random_range(1.0..3.0),
                    rng.random_range(1.0..4.0),
                    rng.random_range(-PI..PI),
                ),
                material: if i % 2 == 0 { Material::Metal } else { Material::Concrete },
            })
            .collect()
    }

    #[test]
    fn los_status_matches_traced_kind() {
        let cfg = test_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let obstacles = random_obstacles(&mut rng, 6);
            let tx = Vec3::new(0.0, rng.random_range(-10.0..10.0), 3.0);
            let rx = Vec3::new(rng.random_range(3.0..14.0), rng.random_range(-10.0..10.0), 1.6);
            let paths = trace_paths(&obstacles, tx, rx, &cfg);
            let has_los = paths.iter().any(|p| p.kind == PathKind::Los);
            // equality holds unless the LOS path was crowded out of max_paths
            if paths.len() < cfg.max_paths {
                assert_eq!(los_status(&obstacles, tx, rx), has_los);
            } else if has_los {
                assert!(los_status(&obstacles, tx, rx));
            }
        }
    }

    #[test]
    fn paths_sorted_and_bounded() {
        let cfg = test_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let obstacles = random_obstacles(&mut rng, 8);
            let tx = Vec3::new(0.0, 0.0, 3.0);
            let rx = Vec3::new(rng.random_range(3.0..14.0), rng.random_range(-12.0..12.0), 1.6);
            let paths = trace_paths(&obstacles, tx, rx, &cfg);
            assert!(paths.len() <= cfg.max_paths);
            for w in paths.windows(2) {
                assert!(w[0].gain.norm() >= w[1].gain.norm());
            }
        }
    }

    #[test]
    fn reciprocity_swaps_angles() {
        let cfg = test_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let obstacles = random_obstacles(&mut rng, 5);
            let tx = Vec3::new(0.0, rng.random_range(-5.0..5.0), 3.0);
            let rx = Vec3::new(rng.random_range(4.0..14.0), rng.random_range(-10.0..10.0), 1.6);
            let mut fwd = trace_paths(&obstacles, tx, rx, &cfg);
            let mut rev = trace_paths(&obstacles, rx, tx, &cfg);
            fwd.sort_by(|a, b| a.delay.total_cmp(&b.delay));
            rev.sort_by(|a, b| a.delay.total_cmp(&b.delay));
            assert_eq!(fwd.len(), rev.len());
            for (f, r) in fwd.iter().zip(&rev) {
                assert!((f.delay - r.delay).abs() < 1e-15);
                assert!((f.gain.norm() - r.gain.norm()).abs() < 1e-15);
                assert!((f.aoa - r.aod).abs() < 1e-9);
                assert!((f.aod - r.aoa).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn frobenius_invariant_under_translation() {
        let cfg = test_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10 {
            let obstacles = random_obstacles(&mut rng, 5);
            let tx = Vec3::new(0.0, 0.0, 3.0);
            let rx = Vec3::new(8.0, rng.random_range(-8.0..8.0), 1.6);
            let shift = Vec3::new(
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
                0.0,
            );
            let moved: Vec<Obstacle> = obstacles
                .iter()
                .map(|o| Obstacle {
                    shape: Cuboid::new(
                        o.shape.center + shift,
                        o.shape.length,
                        o.shape.width,
                        o.shape.height,
                        o.shape.azimuth,
                    ),
                    material: o.material,
                })
                .collect();
            let a = channel_frobenius_sq(&trace_paths(&obstacles, tx, rx, &cfg), &cfg);
            let b =
                channel_frobenius_sq(&trace_paths(&moved, tx + shift, rx + shift, &cfg), &cfg);
            if a > 0.0 {
                assert!((a - b).abs() / a < 1e-9);
            } else {
                assert_eq!(b, 0.0);
            }
        }
    }

    #[test]
    fn frobenius_helper_matches_materialized() {
        let cfg = test_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let paths: Vec<PathParam> = (0..4)
            .map(|_| PathParam {
                gain: Complex64::from_polar(
                    rng.random_range(0.001..0.01),
                    rng.random_range(-PI..PI),
                ),
                delay: rng.random_range(1e-8..3e-7),
                aoa: rng.random_range(-1.5..1.5),
                aod: rng.random_range(-1.5..1.5),
                kind: PathKind::FaceReflection,
            })
            .collect();
        let direct: f64 =
            assemble_channel(&paths, &cfg).iter().map(CMat::frobenius_sq).sum();
        let via_gram = channel_frobenius_sq(&paths, &cfg);
        assert!((direct - via_gram).abs() / direct < 1e-9);
    }

    /// Tap-domain reference form with an ideal lowpass pulse spanning the
    /// occupied band, `d(t) = e^{j pi t / T_s} sinc(t / T_s)`, and `N`
    /// cyclic-prefix taps.
    fn tap_sum_oracle(paths: &[PathParam], cfg: &ChannelConfig) -> Vec<CMat> {
        let sinc = |x: f64| if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
        let ts = cfg.sampling_interval();
        let k_count = cfg.num_subcarriers;
        let n_taps = cfg.cyclic_prefix_len;
        let (nu, nb) = (cfg.num_ms_antennas, cfg.num_bs_antennas);
        let mut out: Vec<CMat> = (0..k_count).map(|_| CMat::zeros(nu, nb)).collect();
        for path in paths {
            let a_r = steering_vector(path.aoa, nu);
            let a_t = steering_vector(path.aod, nb);
            for (k, h) in out.iter_mut().enumerate() {
                let mut c = Complex64::ZERO;
                for n in 0..n_taps {
                    let arg = n as f64 - path.delay / ts;
                    let pulse = Complex64::from_polar(1.0, PI * arg) * sinc(arg);
                    c += path.gain
                        * Complex64::from_polar(
                            1.0,
                            -2.0 * PI * (k as f64) * (n as f64) / (k_count as f64),
                        )
                        * pulse;
                }
                for r in 0..nu {
                    for col in 0..nb {
                        *h.at_mut(r, col) += c * a_r[r] * a_t[col].conj();
                    }
                }
            }
        }
        out
    }

    fn relative_error(a: &[CMat], b: &[CMat]) -> f64 {
        let num: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| {
                x.data.iter().zip(&y.data).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>()
            })
            .sum();
        let den: f64 = a.iter().map(CMat::frobenius_sq).sum();
        (num / den).sqrt()
    }

    fn random_paths_with_delays(rng: &mut ChaCha8Rng, delays: &[f64]) -> Vec<PathParam> {
        delays
            .iter()
            .map(|&delay| PathParam {
                gain: Complex64::from_polar(
                    rng.random_range(0.001..0.01),
                    rng.random_range(-PI..PI),
                ),
                delay,
                aoa: rng.random_range(-1.5..1.5),
                aod: rng.random_range(-1.5..1.5),
                kind: PathKind::FaceReflection,
            })
            .collect()
    }

    #[test]
    fn tap_sum_equivalence_on_grid() {
        let cfg = test_cfg();
        let ts = cfg.sampling_interval();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..20 {
            let delays: Vec<f64> = (0..4)
                .map(|_| ts * rng.random_range(0..cfg.num_subcarriers as u32) as f64)
                .collect();
            let paths = random_paths_with_delays(&mut rng, &delays);
            let freq = assemble_channel(&paths, &cfg);
            let taps = tap_sum_oracle(&paths, &cfg);
            assert!(relative_error(&freq, &taps) <= 1e-6);
        }
    }

    #[test]
    fn tap_sum_equivalence_near_grid() {
        // off-grid delays incur truncation error from the N = K tap window;
        // within half a percent of a tap the forms agree to 1e-2
        let cfg = test_cfg();
        let ts = cfg.sampling_interval();
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..20 {
            let delays: Vec<f64> = (0..4)
                .map(|_| {
                    let m = rng.random_range(2..cfg.num_subcarriers as u32 - 3) as f64;
                    let jitter = rng.random_range(-0.005..0.005);
                    ts * (m + jitter)
                })
                .collect();
            let paths = random_paths_with_delays(&mut rng, &delays);
            let freq = assemble_channel(&paths, &cfg);
            let taps = tap_sum_oracle(&paths, &cfg);
            assert!(relative_error(&freq, &taps) <= 1e-2);
        }
    }

    #[test]
    fn channel_dump_layout() {
        let cfg = ChannelConfig {
            num_bs_antennas: 2,
            num_ms_antennas: 2,
            num_subcarriers: 2,
            ..Default::default()
        };
        let paths = vec![PathParam {
            gain: Complex64::new(0.5, -0.25),
            delay: 1e-7,
            aoa: 0.1,
            aod: -0.2,
            kind: PathKind::GroundReflection,
        }];
        let snap = ChannelSnapshot {
            h_per_subcarrier: assemble_channel(&paths, &cfg),
            paths,
            los_flag: false,
        };
        let mut buf = Vec::new();
        write_channel_dump(&mut buf, 3, 7, &snap).unwrap();
        let expected = 4 + 4 + 1 + 4 + 6 * 8 + 2 * 2 * 2 * 8;
        assert_eq!(buf.len(), expected);
        assert_eq!(u32::from_le_bytes(buf[0..4].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 7);
        assert_eq!(buf[8], 0);
        assert_eq!(u32::from_le_bytes(buf[9..13].try_into().unwrap()), 1);
        let kind = f64::from_le_bytes(buf[13 + 40..13 + 48].try_into().unwrap());
        assert_eq!(kind, PathKind::GroundReflection.code() as f64);
    }
}
