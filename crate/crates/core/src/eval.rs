//! Evaluation metrics: achievable transmission rate ratio for beam
//! selection (over all snapshots) and for alignment policies with
//! alignment-time overhead, BCT group prediction accuracy, the
//! location-noise robustness sweep, and the CSV report writer.
//!
//! Numerators and denominators are both read from the per-record rate
//! tables over the restricted pair set, so oracle identities (a perfect
//! predictor scoring exactly 1) hold bit-exactly at the stored precision.

use crate::beams::top_b_rate_from_table;
use crate::config::{subseed, SeedStage};
use crate::dataset::{Dataset, DatasetRecord, Split};
use crate::exec;
use crate::features::{build_vdf, GridConfig, SizeMaxima, Vdf};
use crate::geometry::{CameraMount, Vec2};
use crate::predict::knn::LocationKnn;
use crate::predict::vdban::VdbanModel;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;
use std::path::Path;

/// Record filter for the LOS/NLOS breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    All,
    Los,
    Nlos,
}

impl Subset {
    pub fn name(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::Los => "los",
            Subset::Nlos => "nlos",
        }
    }

    pub fn admits(self, record: &DatasetRecord) -> bool {
        match self {
            Subset::All => true,
            Subset::Los => record.los,
            Subset::Nlos => !record.los,
        }
    }
}

/// One row of the evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: String,
    pub split: String,
    pub subset: String,
    pub b: Option<usize>,
    pub sigma_c: Option<f64>,
    pub m_f: Option<u32>,
    pub tb_over_td: Option<f64>,
    pub value: f64,
    pub n: usize,
}

/// Ratio of the summed Top-B achieved rate to the summed optimal rate over
/// the records admitted by `subset`. `rankings` runs parallel to `records`
/// and holds positions into each record's rate table.
pub fn atrr_selection(
    records: &[&DatasetRecord],
    rankings: &[Vec<usize>],
    b: usize,
    subset: Subset,
) -> Result<(f64, usize)> {
    assert_eq!(records.len(), rankings.len());
    if b == 0 {
        return Err(Error::invalid("Top-B needs b >= 1"));
    }
    let mut achieved = 0.0f64;
    let mut optimal = 0.0f64;
    let mut n = 0usize;
    for (rec, ranking) in records.iter().zip(rankings) {
        if !subset.admits(rec) {
            continue;
        }
        let top = top_b_rate_from_table(&rec.rates, ranking, b).ok_or_else(|| {
            Error::invalid(format!(
                "ranking for scenario {} snapshot {} indexes outside the rate table",
                rec.scenario, rec.snapshot
            ))
        })?;
        achieved += top;
        optimal += rec.rates[rec.beam_label as usize] as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid(format!("no records in subset `{}`", subset.name())));
    }
    Ok((achieved / optimal, n))
}

/// Fraction of eligible records whose predicted BCT group contains the true
/// coherence time. `predicted_groups` runs parallel to `records`.
pub fn bctpa(records: &[&DatasetRecord], predicted_groups: &[u8]) -> Result<(f64, usize)> {
    assert_eq!(records.len(), predicted_groups.len());
    if records.is_empty() {
        return Err(Error::invalid("no eligible records for BCTPA (all trajectories shorter than the sequence length)"));
    }
    let hits = records
        .iter()
        .zip(predicted_groups)
        .filter(|(rec, &g)| rec.bct_group == g)
        .count();
    Ok((hits as f64 / records.len() as f64, records.len()))
}

/// Simulate the alignment policy over per-scenario record groups and return
/// the rate ratio with alignment overhead.
///
/// Per scenario: at the first eligible snapshot (index `s`, where the
/// sequence feature first exists) the system aligns to the snapshot's
/// optimal pair, asks `predict_m` for a coherence time, holds the pair for
/// that many intervals, then realigns. Intervals containing an alignment pay
/// the `1 - tb_over_td` factor. Held beams go stale against the per-record
/// rate tables; the denominator is the optimal rate over the same range.
pub fn atrr_policy(
    scenarios: &[Vec<&DatasetRecord>],
    s: usize,
    tb_over_td: f64,
    mut predict_m: impl FnMut(&DatasetRecord) -> u32,
) -> Result<(f64, usize)> {
    if !(0.0..1.0).contains(&tb_over_td) {
        return Err(Error::invalid("tb_over_td must lie in [0, 1)"));
    }
    let mut achieved = 0.0f64;
    let mut optimal = 0.0f64;
    let mut n = 0usize;
    for group in scenarios {
        if group.len() < s {
            continue;
        }
        let mut next_align = s; // 1-based snapshot index
        let mut held: usize = 0;
        for rec in &group[s - 1..] {
            let r = rec.snapshot as usize;
            let aligned_here = r == next_align;
            if aligned_here {
                held = rec.beam_label as usize;
                let m = predict_m(rec).max(1);
                next_align = r + m as usize;
            }
            let rate = *rec
                .rates
                .get(held)
                .ok_or_else(|| Error::invalid("held pair outside the rate table"))? as f64;
            let factor = if aligned_here { 1.0 - tb_over_td } else { 1.0 };
            achieved += factor * rate;
            optimal += rec.rates[rec.beam_label as usize] as f64;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("no scenario is long enough for the policy metric"));
    }
    Ok((achieved / optimal, n))
}

/// Re-rank every record under location noise of the given standard
/// deviations and report LOS/NLOS Top-B ATRR per sigma. The VDF is rebuilt
/// from the stored detections with the corrupted location, exactly as a
/// live system would see it.
pub struct RobustnessPoint {
    pub sigma_c: f64,
    pub los: (f64, usize),
    pub nlos: (f64, usize),
}

pub fn robustness_sweep(
    dataset: &Dataset,
    split: Split,
    sigmas: &[f64],
    b: usize,
    seed: u64,
    ranker: &(dyn Fn(&DatasetRecord, Vec2, &Vdf) -> Vec<usize> + Sync),
) -> Result<Vec<RobustnessPoint>> {
    let records = dataset.records_in(split);
    if records.is_empty() {
        return Err(Error::invalid(format!("split `{}` is empty", split.name())));
    }
    let grid = &dataset.header.grid;
    let maxima = &dataset.header.maxima;
    let mounts = dataset.header.camera_mounts();
    let mut out = Vec::with_capacity(sigmas.len());
    for (si, &sigma) in sigmas.iter().enumerate() {
        if sigma < 0.0 {
            return Err(Error::invalid("sigma_c must be nonnegative"));
        }
        let rankings: Vec<Vec<usize>> = exec::par_map(records.clone(), |rec| {
            let loc = corrupt_location(rec, sigma, si, seed);
            let vdf = rebuild_vdf(rec, loc, grid, maxima, &mounts);
            ranker(rec, loc, &vdf)
        });
        let los = atrr_selection(&records, &rankings, b, Subset::Los)?;
        let nlos = atrr_selection(&records, &rankings, b, Subset::Nlos)?;
        out.push(RobustnessPoint { sigma_c: sigma, los, nlos });
    }
    Ok(out)
}

fn corrupt_location(rec: &DatasetRecord, sigma: f64, sigma_index: usize, seed: u64) -> Vec2 {
    if sigma == 0.0 {
        return rec.ms_true;
    }
    let sub = subseed(
        seed,
        SeedStage::EvalNoise,
        ((sigma_index as u64) << 32) | rec.scenario as u64,
        rec.snapshot as u64,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(sub);
    let nx: f64 = StandardNormal.sample(&mut rng);
    let ny: f64 = StandardNormal.sample(&mut rng);
    Vec2::new(rec.ms_true.x + sigma * nx, rec.ms_true.y + sigma * ny)
}

fn rebuild_vdf(
    rec: &DatasetRecord,
    loc: Vec2,
    grid: &GridConfig,
    maxima: &SizeMaxima,
    mounts: &[CameraMount],
) -> Vdf {
    build_vdf(&rec.detections, mounts, loc, grid, maxima)
}

/// Rankings of a trained beam classifier over records (clean locations).
pub fn model_rankings(model: &VdbanModel, records: &[&DatasetRecord]) -> Vec<Vec<usize>> {
    exec::par_map(records.to_vec(), |rec| {
        model.rank_classes(&rec.vdf.data, [rec.ms_true.x, rec.ms_true.y])
    })
}

/// Rankings of the location baseline over records (clean locations).
pub fn knn_rankings(knn: &LocationKnn, records: &[&DatasetRecord]) -> Vec<Vec<usize>> {
    exec::par_map(records.to_vec(), |rec| knn.rank(rec.ms_true))
}

/// The oracle ranking: the true label first, the rest in index order.
pub fn oracle_rankings(records: &[&DatasetRecord], num_classes: usize) -> Vec<Vec<usize>> {
    records
        .iter()
        .map(|rec| {
            let mut r = Vec::with_capacity(num_classes);
            r.push(rec.beam_label as usize);
            r.extend((0..num_classes).filter(|&c| c != rec.beam_label as usize));
            r
        })
        .collect()
}

/// Write report rows as CSV with the config hash on a leading comment line.
pub fn write_reports_csv(path: &Path, config_hash: &str, reports: &[MetricReport]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# config_hash={config_hash}")?;
    writeln!(w, "metric,split,subset,b,sigma_c,m_f,tb_over_td,value,n")?;
    for r in reports {
        let opt_usize = |v: &Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_u32 = |v: &Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_f64 = |v: &Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{:.10},{}",
            r.metric,
            r.split,
            r.subset,
            opt_usize(&r.b),
            opt_f64(&r.sigma_c),
            opt_u32(&r.m_f),
            opt_f64(&r.tb_over_td),
            r.value,
            r.n
        )?;
    }
    w.flush()?;
    Ok(())
}
