//! Orchestration shared by the CLI and the acceptance suite: building
//! training samples from datasets, the standard training recipes, and the
//! full evaluation run that produces the report rows.

use crate::config::{subseed, EvalConfig, LabelKey, SeedStage, TrainConfig};
use crate::dataset::{resample_balanced, Dataset, DatasetRecord, Split};
use crate::eval::{
    atrr_policy, atrr_selection, bctpa, knn_rankings, model_rankings, oracle_rankings,
    robustness_sweep, MetricReport, Subset,
};
use crate::features::bct::group_min;
use crate::features::sif::build_seq;
use crate::predict::bct_net::{pool_seq, train_bct_net, BctNet, BctNetSpec};
use crate::predict::knn::LocationKnn;
use crate::predict::train::{train_vdban, TrainedVdban};
use crate::predict::vdban::{VdbanModel, VdbanSpec};
use crate::predict::Sample;
use crate::{Error, Result};
use std::collections::HashMap;

/// Default pooling grid and hidden width of the BCT classifier.
pub const BCT_POOL_ROWS: usize = 4;
pub const BCT_POOL_COLS: usize = 8;
pub const BCT_HIDDEN: usize = 128;

pub fn samples_from_records(records: &[&DatasetRecord]) -> Vec<Sample> {
    records
        .iter()
        .map(|rec| Sample {
            vdf: rec.vdf.data.clone(),
            loc: [rec.ms_true.x, rec.ms_true.y],
            label: rec.beam_label as usize,
        })
        .collect()
}

/// Train the beam classifier on the train split, selecting the epoch with
/// the best Top-1 ATRR on the validation split.
pub fn train_beam_classifier(
    dataset: &Dataset,
    cfg: &TrainConfig,
    spec: Option<VdbanSpec>,
) -> Result<TrainedVdban> {
    if cfg.label != LabelKey::Beam {
        return Err(Error::invalid("beam classifier training requires label = beam"));
    }
    let train_records = dataset.records_in(Split::Train);
    let val_records = dataset.records_in(Split::Val);
    if train_records.is_empty() || val_records.is_empty() {
        return Err(Error::invalid("train and validation splits must be nonempty"));
    }
    let classes = dataset.header.pair_set.len();
    let spec = spec.unwrap_or_else(|| {
        VdbanSpec::reference(dataset.header.vdf_rows as usize, classes)
    });
    if spec.num_classes != classes || spec.grid_rows as u32 != dataset.header.vdf_rows {
        return Err(Error::invalid("architecture does not match the dataset label space"));
    }
    let samples = samples_from_records(&train_records);
    let seed = cfg
        .seed
        .unwrap_or_else(|| subseed(dataset.header.config.master_seed, SeedStage::TrainVdban, 0, 0));
    train_vdban(spec, &samples, cfg, seed, |model| {
        let rankings = model_rankings(model, &val_records);
        atrr_selection(&val_records, &rankings, 1, Subset::All).map(|(v, _)| v).unwrap_or(0.0)
    })
}

/// Pooled sequence features and group labels for every record with enough
/// history (snapshot index >= seq_len). Requires stored SIFs.
pub fn bct_features(
    dataset: &Dataset,
    split: Split,
) -> Result<(Vec<Vec<f64>>, Vec<usize>, Vec<(u32, u32)>)> {
    if dataset.header.sif_dims.is_none() {
        return Err(Error::invalid(
            "dataset lacks stored image features; regenerate with features.store_sif = true",
        ));
    }
    let s = dataset.header.config.features.seq_len;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut keys = Vec::new();
    for group in dataset.scenarios_in(split) {
        for (i, rec) in group.iter().enumerate() {
            if i + 1 < s {
                continue;
            }
            let frames: Vec<&crate::features::sif::SceneImageFeature> = group[i + 1 - s..=i]
                .iter()
                .map(|r| {
                    r.sif.as_ref().ok_or_else(|| {
                        Error::invalid("record lacks a stored SIF (read with skip_sif?)")
                    })
                })
                .collect::<Result<_>>()?;
            let seq = build_seq(&frames)?;
            features.push(pool_seq(&seq, BCT_POOL_ROWS, BCT_POOL_COLS));
            labels.push(rec.bct_group as usize - 1);
            keys.push((rec.scenario, rec.snapshot));
        }
    }
    Ok((features, labels, keys))
}

/// Train the BCT group classifier with balanced re-sampling of the training
/// split.
pub fn train_bct_classifier(dataset: &Dataset, cfg: &TrainConfig) -> Result<(BctNet, Vec<(usize, f64)>)> {
    if cfg.label != LabelKey::BctGroup {
        return Err(Error::invalid("BCT classifier training requires label = bct_group"));
    }
    let (features, labels, _) = bct_features(dataset, Split::Train)?;
    if features.is_empty() {
        return Err(Error::invalid("no training scenario is long enough for a sequence feature"));
    }
    let group_keys: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
    let seed = cfg
        .seed
        .unwrap_or_else(|| subseed(dataset.header.config.master_seed, SeedStage::TrainBct, 0, 0));
    let picked = resample_balanced(&group_keys, subseed(seed, SeedStage::Resample, 0, 0));
    let features_rs: Vec<Vec<f64>> = picked.iter().map(|&i| features[i].clone()).collect();
    let labels_rs: Vec<usize> = picked.iter().map(|&i| labels[i]).collect();
    let (h, w, ch) = dataset.header.sif_dims.unwrap();
    let _ = (h, w);
    let spec = BctNetSpec {
        pool_rows: BCT_POOL_ROWS,
        pool_cols: BCT_POOL_COLS,
        steps: dataset.header.config.features.seq_len,
        channels: ch as usize,
        hidden: BCT_HIDDEN,
    };
    train_bct_net(spec, &features_rs, &labels_rs, cfg, seed)
}

/// Which predictors an evaluation run covers.
#[derive(Debug, Default)]
pub struct EvalSubjects<'a> {
    pub vdban: Option<&'a VdbanModel>,
    pub bct: Option<&'a BctNet>,
    pub knn: bool,
    pub oracle: bool,
}

/// Run the full metric suite on the test split: Top-B curves per subset for
/// each selector, the location-noise robustness sweep, the fixed-vs-
/// predicted BCT policy table, and BCTPA.
pub fn evaluate(
    dataset: &Dataset,
    subjects: &EvalSubjects,
    eval_cfg: &EvalConfig,
) -> Result<Vec<MetricReport>> {
    let test = dataset.records_in(Split::Test);
    if test.is_empty() {
        return Err(Error::invalid("test split is empty"));
    }
    let classes = dataset.header.pair_set.len();
    let mut reports = Vec::new();

    let mut selector_rankings: Vec<(String, Vec<Vec<usize>>)> = Vec::new();
    if subjects.oracle {
        selector_rankings.push(("oracle".into(), oracle_rankings(&test, classes)));
    }
    if let Some(model) = subjects.vdban {
        selector_rankings.push(("vdban".into(), model_rankings(model, &test)));
    }
    let knn = if subjects.knn {
        let train = dataset.records_in(Split::Train);
        let points = train.iter().map(|r| r.ms_true).collect();
        let labels = train.iter().map(|r| r.beam_label as usize).collect();
        Some(LocationKnn::fit(points, labels, classes, eval_cfg.knn_k))
    } else {
        None
    };
    if let Some(ref k) = knn {
        selector_rankings.push(("knn".into(), knn_rankings(k, &test)));
    }

    for (name, rankings) in &selector_rankings {
        for &b in &eval_cfg.top_b {
            for subset in [Subset::All, Subset::Los, Subset::Nlos] {
                let (value, n) = atrr_selection(&test, rankings, b, subset)?;
                reports.push(MetricReport {
                    metric: format!("atrr_{name}"),
                    split: "test".into(),
                    subset: subset.name().into(),
                    b: Some(b),
                    sigma_c: None,
                    m_f: None,
                    tb_over_td: None,
                    value,
                    n,
                });
            }
        }
    }

    // robustness sweep at Top-5 for the learned selector and the baseline
    let sweep_b = 5usize.min(classes.max(1));
    if let Some(model) = subjects.vdban {
        let points = robustness_sweep(
            dataset,
            Split::Test,
            &eval_cfg.sigma_c,
            sweep_b,
            dataset.header.config.master_seed,
            &|_rec, loc, vdf| model.rank_classes(&vdf.data, [loc.x, loc.y]),
        )?;
        push_robustness(&mut reports, "vdban", sweep_b, &points);
    }
    if let Some(ref k) = knn {
        let points = robustness_sweep(
            dataset,
            Split::Test,
            &eval_cfg.sigma_c,
            sweep_b,
            dataset.header.config.master_seed,
            &|_rec, loc, _vdf| k.rank(loc),
        )?;
        push_robustness(&mut reports, "knn", sweep_b, &points);
    }

    // alignment policies
    let s = dataset.header.config.features.seq_len;
    let scenarios = dataset.scenarios_in(Split::Test);
    let predicted_groups: Option<HashMap<(u32, u32), u8>> = match subjects.bct {
        Some(net) => {
            let (features, _, keys) = bct_features(dataset, Split::Test)?;
            Some(
                keys.into_iter()
                    .zip(features.iter().map(|f| net.predict_group(f)))
                    .collect(),
            )
        }
        None => None,
    };
    for &tb in &eval_cfg.tb_over_td {
        let (value, n) = atrr_policy(&scenarios, s, tb, |rec| rec.bct_label)?;
        reports.push(policy_row("atrr_policy_perfect", None, tb, value, n));
        for &m_f in &eval_cfg.fixed_m {
            let (value, n) = atrr_policy(&scenarios, s, tb, |_| m_f)?;
            reports.push(policy_row("atrr_policy_fixed", Some(m_f), tb, value, n));
        }
        if let Some(ref groups) = predicted_groups {
            let (value, n) = atrr_policy(&scenarios, s, tb, |rec| {
                group_min(groups[&(rec.scenario, rec.snapshot)])
            })?;
            reports.push(policy_row("atrr_policy_bct", None, tb, value, n));
        }
    }

    // BCT group prediction accuracy
    if let Some(net) = subjects.bct {
        for split in [Split::Val, Split::Test] {
            let (features, _, keys) = bct_features(dataset, split)?;
            let by_key: HashMap<(u32, u32), &DatasetRecord> = dataset
                .records_in(split)
                .into_iter()
                .map(|r| ((r.scenario, r.snapshot), r))
                .collect();
            let records: Vec<&DatasetRecord> = keys.iter().map(|k| by_key[k]).collect();
            let groups: Vec<u8> = features.iter().map(|f| net.predict_group(f)).collect();
            let (value, n) = bctpa(&records, &groups)?;
            reports.push(MetricReport {
                metric: "bctpa".into(),
                split: split.name().into(),
                subset: "all".into(),
                b: None,
                sigma_c: None,
                m_f: None,
                tb_over_td: None,
                value,
                n,
            });
        }
    }

    Ok(reports)
}

fn push_robustness(
    reports: &mut Vec<MetricReport>,
    name: &str,
    b: usize,
    points: &[crate::eval::RobustnessPoint],
) {
    for p in points {
        for (subset, (value, n)) in [("los", p.los), ("nlos", p.nlos)] {
            reports.push(MetricReport {
                metric: format!("atrr_sigma_{name}"),
                split: "test".into(),
                subset: subset.into(),
                b: Some(b),
                sigma_c: Some(p.sigma_c),
                m_f: None,
                tb_over_td: None,
                value,
                n,
            });
        }
    }
}

fn policy_row(metric: &str, m_f: Option<u32>, tb: f64, value: f64, n: usize) -> MetricReport {
    MetricReport {
        metric: metric.into(),
        split: "test".into(),
        subset: "all".into(),
        b: None,
        sigma_c: None,
        m_f,
        tb_over_td: Some(tb),
        value,
        n,
    }
}
