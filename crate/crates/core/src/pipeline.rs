//! End-to-end dataset generation: scenarios -> channels -> optimal-pair
//! labels -> features -> labelled records, deterministic from the master
//! seed and independent of worker count.
//!
//! Noise calibration happens between tracing and labelling: the
//! per-subcarrier noise power is chosen so that the dataset-average channel
//! SNR statistic `P * mean ||H||_F^2 / (K * sigma^2)` equals 29.5 dB, then
//! every rate is computed against that noise floor.

use crate::beams::{self, Codebook};
use crate::channel::{self, ChannelConfig, PathParam};
use crate::config::{subseed, RunConfig, SeedStage};
use crate::dataset::{split_dataset, Dataset, DatasetHeader, DatasetRecord, DATASET_MAGIC};
use crate::exec;
use crate::features::sif::{build_sif, SceneImageFeature};
use crate::features::{bct, build_vdf, detect_vehicles, Detection, GridConfig, Vdf};
use crate::geometry::{Pose2D, Vec2};
use crate::scenario::{sample_trajectory, spawn_scenario};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Target dataset SNR statistic in dB for noise calibration.
const SNR_CALIBRATION_DB: f64 = 29.5;

struct SnapshotData {
    r: u32,
    time: f64,
    ms_true: Vec2,
    ms_pose: Pose2D,
    detections: Vec<Detection>,
    paths: Vec<PathParam>,
    los: bool,
    vdf: Vdf,
    sif: Option<SceneImageFeature>,
}

struct ScenarioBatch {
    q: u32,
    snapshots: Vec<SnapshotData>,
}

fn build_scenario_batch(q: u32, cfg: &RunConfig, grid: &GridConfig) -> Result<ScenarioBatch> {
    let resolution = (cfg.features.image_width, cfg.features.image_height);
    let seed = subseed(cfg.master_seed, SeedStage::Scenario, q as u64, 0);
    let scenario = spawn_scenario(seed, &cfg.scenario, resolution)?;
    let snapshots = sample_trajectory(&scenario)?;
    let mut out = Vec::with_capacity(snapshots.len());
    for (i, snap) in snapshots.iter().enumerate() {
        let r = (i + 1) as u32;
        let mut rng =
            ChaCha8Rng::seed_from_u64(subseed(cfg.master_seed, SeedStage::Detection, q as u64, r as u64));
        let detections = detect_vehicles(snap, &scenario.camera_mounts, &cfg.features.detection_noise, &mut rng);
        let obstacles = snap.obstacles(&scenario.static_buildings);
        let tx = scenario.rsu_pose;
        let rx = snap.ms_antenna(cfg.scenario.antenna_height_above_roof);
        let paths = channel::trace_paths(&obstacles, tx, rx, &cfg.channel);
        let los = paths.iter().any(|p| p.kind == channel::PathKind::Los);
        let vdf = build_vdf(
            &detections,
            &scenario.camera_mounts,
            snap.ms_true_location,
            grid,
            &cfg.features.maxima,
        );
        let sif = cfg.features.store_sif.then(|| {
            build_sif(
                snap.time,
                &scenario.static_buildings,
                &snap.ms_pose,
                &scenario.camera_mounts,
                &detections,
                &cfg.features.maxima,
            )
        });
        out.push(SnapshotData {
            r,
            time: snap.time,
            ms_true: snap.ms_true_location,
            ms_pose: snap.ms_pose,
            detections,
            paths,
            los,
            vdf,
            sif,
        });
    }
    let _ = out.last().map(|s| s.ms_pose); // poses stay with the records below
    Ok(ScenarioBatch { q, snapshots: out })
}

/// Generate the full labelled dataset for a run config.
pub fn generate_dataset(cfg: &RunConfig) -> Result<Dataset> {
    cfg.validate()?;
    let grid = GridConfig::from_lanes(&cfg.grid, &cfg.scenario.lanes);
    if grid.is_empty() {
        return Err(Error::config("grid.region", "no grid cell intersects a lane"));
    }

    // stage 1: scenes, trajectories, detections, paths, features
    let batches: Vec<Result<ScenarioBatch>> =
        exec::par_map_range(cfg.num_scenarios, |q| build_scenario_batch(q as u32, cfg, &grid));
    let batches: Vec<ScenarioBatch> = batches.into_iter().collect::<Result<_>>()?;

    // stage 2: noise calibration over every traced snapshot
    let mut frob_sum = 0.0;
    let mut n_records = 0usize;
    for b in &batches {
        for s in &b.snapshots {
            frob_sum += channel::channel_frobenius_sq(&s.paths, &cfg.channel);
            n_records += 1;
        }
    }
    if frob_sum <= 0.0 {
        return Err(Error::invalid("every traced snapshot is in outage; cannot calibrate noise"));
    }
    let k = cfg.channel.num_subcarriers as f64;
    let sigma2 = cfg.channel.per_subcarrier_power * frob_sum
        / (k * n_records as f64 * 10f64.powf(SNR_CALIBRATION_DB / 10.0));
    let ch_cfg = ChannelConfig { noise_power: sigma2, ..cfg.channel.clone() };

    let cb_tx = beams::dft_codebook(ch_cfg.num_bs_antennas, cfg.codebook.tx_size);
    let cb_rx = beams::dft_codebook(ch_cfg.num_ms_antennas, cfg.codebook.rx_size);
    let n_rx = cb_rx.len();

    // stage 3: exhaustive sweep labels
    let flat: Vec<(usize, usize)> = batches
        .iter()
        .enumerate()
        .flat_map(|(bi, b)| (0..b.snapshots.len()).map(move |si| (bi, si)))
        .collect();
    let sweeps: Vec<(usize, f64)> = exec::par_map(flat.clone(), |(bi, si)| {
        let table =
            beams::rate_table_from_paths(&batches[bi].snapshots[si].paths, &cb_tx, &cb_rx, &ch_cfg);
        beams::argmax_with_tie(&table)
    });

    // stage 4: restricted pair set, coherence-time labels, splits
    let all_labels: Vec<usize> = sweeps.iter().map(|&(idx, _)| idx).collect();
    let pair_set = beams::restrict_pairs(&all_labels, n_rx);
    let splits = split_dataset(
        cfg.num_scenarios,
        cfg.split_fractions,
        subseed(cfg.master_seed, SeedStage::Split, 0, 0),
    )?;

    let mut label_seqs: Vec<Vec<u32>> = Vec::with_capacity(batches.len());
    {
        let mut offset = 0;
        for b in &batches {
            let n = b.snapshots.len();
            label_seqs
                .push(all_labels[offset..offset + n].iter().map(|&l| l as u32).collect());
            offset += n;
        }
    }

    // stage 5: per-record rate tables over the restricted set
    let tables: Vec<Vec<f32>> = exec::par_map(flat.clone(), |(bi, si)| {
        beams::rate_table_for_pairs(
            &batches[bi].snapshots[si].paths,
            &pair_set.pairs,
            &cb_tx,
            &cb_rx,
            &ch_cfg,
        )
    });

    let sif_dims = cfg.features.store_sif.then(|| {
        (
            cfg.features.image_height,
            cfg.features.image_width,
            3 * cfg.scenario.camera_count as u32,
        )
    });
    let header = DatasetHeader {
        format: DATASET_MAGIC.to_string(),
        config_hash: cfg.hash(),
        sigma2,
        num_scenarios: cfg.num_scenarios as u32,
        num_records: n_records as u64,
        vdf_rows: grid.len() as u32,
        sif_dims,
        pair_set: pair_set.pairs.clone(),
        splits,
        grid,
        maxima: cfg.features.maxima,
        config: cfg.clone(),
    };

    let mut records = Vec::with_capacity(n_records);
    for ((bi, si), (sweep, table)) in flat.into_iter().zip(sweeps.into_iter().zip(tables)) {
        let b = &batches[bi];
        let s = &b.snapshots[si];
        let (opt_idx, opt_rate) = sweep;
        let (tx, rx) = beams::pair_from_index(opt_idx, n_rx);
        let optimal_pair = (tx as u32, rx as u32);
        let beam_label = pair_set
            .position(optimal_pair)
            .expect("optimal pair is in the restricted set by construction") as u32;
        let m = bct::label_bct(&label_seqs[bi], s.r as usize);
        records.push(DatasetRecord {
            scenario: b.q,
            snapshot: s.r,
            time: s.time,
            los: s.los,
            ms_true: s.ms_true,
            detections: s.detections.clone(),
            paths: s.paths.clone(),
            vdf: s.vdf.clone(),
            sif: s.sif.clone(),
            optimal_pair,
            optimal_rate: opt_rate,
            beam_label,
            bct_label: m,
            bct_group: bct::group_bct(m),
            rates: table,
        });
    }

    Ok(Dataset { header, records })
}

impl DatasetHeader {
    /// Channel config with the calibrated noise power applied.
    pub fn channel_config(&self) -> ChannelConfig {
        ChannelConfig { noise_power: self.sigma2, ..self.config.channel.clone() }
    }

    /// Codebooks the dataset was labelled with.
    pub fn codebooks(&self) -> (Codebook, Codebook) {
        (
            beams::dft_codebook(self.config.channel.num_bs_antennas, self.config.codebook.tx_size),
            beams::dft_codebook(self.config.channel.num_ms_antennas, self.config.codebook.rx_size),
        )
    }

    /// Camera mounts the dataset's detections are expressed against.
    pub fn camera_mounts(&self) -> Vec<crate::geometry::CameraMount> {
        let resolution = (self.config.features.image_width, self.config.features.image_height);
        // mounts depend only on the config, not the seed
        spawn_scenario(0, &scenario_without_traffic(&self.config.scenario), resolution)
            .expect("header scenario config was validated at generation")
            .camera_mounts
    }
}

fn scenario_without_traffic(cfg: &crate::scenario::ScenarioConfig) -> crate::scenario::ScenarioConfig {
    let mut c = cfg.clone();
    for g in &mut c.spawn_groups {
        g.count = 0;
    }
    c
}
