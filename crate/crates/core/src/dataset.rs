//! Dataset records, scenario-level splits, class re-sampling, and the
//! on-disk dataset format.
//!
//! A dataset file is a short magic line, a TOML metadata header (config
//! echo, restricted pair set, grid anchors, split assignment, calibration,
//! seeds), a binary marker line, then fixed-layout little-endian records.
//! Everything needed to re-evaluate or retrain lives in the file.

use crate::beams::BeamPairSet;
use crate::channel::{PathKind, PathParam};
use crate::config::RunConfig;
use crate::features::{Detection, GridConfig, SizeMaxima, Vdf};
use crate::features::sif::SceneImageFeature;
use crate::geometry::{Vec2, Vec3};
use crate::{Error, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const DATASET_MAGIC: &str = "beamlab-dataset-v1";
const BINARY_MARKER: &str = "#---binary-records---";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One labelled snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub scenario: u32,
    /// 1-based snapshot index within the scenario.
    pub snapshot: u32,
    pub time: f64,
    pub los: bool,
    pub ms_true: Vec2,
    pub detections: Vec<Detection>,
    pub paths: Vec<PathParam>,
    pub vdf: Vdf,
    pub sif: Option<SceneImageFeature>,
    pub optimal_pair: (u32, u32),
    pub optimal_rate: f64,
    /// Index of the optimal pair within the restricted pair set.
    pub beam_label: u32,
    /// True beam coherence time in snapshot intervals.
    pub bct_label: u32,
    pub bct_group: u8,
    /// Rate of every restricted pair at this snapshot, in pair-set order.
    pub rates: Vec<f32>,
}

/// Header metadata serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub config_hash: String,
    /// Calibrated per-subcarrier noise power.
    pub sigma2: f64,
    pub num_scenarios: u32,
    pub num_records: u64,
    pub vdf_rows: u32,
    /// (height, width, channels) when records carry a rendered SIF.
    pub sif_dims: Option<(u32, u32, u32)>,
    pub pair_set: Vec<(u32, u32)>,
    /// Split of each scenario, indexed by scenario id.
    pub splits: Vec<Split>,
    pub grid: GridConfig,
    pub maxima: SizeMaxima,
    pub config: RunConfig,
}

impl DatasetHeader {
    pub fn pair_set(&self) -> BeamPairSet {
        BeamPairSet { pairs: self.pair_set.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn split_of(&self, scenario: u32) -> Split {
        self.header.splits[scenario as usize]
    }

    pub fn records_in(&self, split: Split) -> Vec<&DatasetRecord> {
        self.records.iter().filter(|r| self.split_of(r.scenario) == split).collect()
    }

    /// Records of one split grouped by scenario, each group ordered by
    /// snapshot index.
    pub fn scenarios_in(&self, split: Split) -> Vec<Vec<&DatasetRecord>> {
        let mut groups: Vec<Vec<&DatasetRecord>> = Vec::new();
        let mut current: Option<u32> = None;
        for r in &self.records {
            if self.split_of(r.scenario) != split {
                continue;
            }
            if current != Some(r.scenario) {
                groups.push(Vec::new());
                current = Some(r.scenario);
            }
            groups.last_mut().unwrap().push(r);
        }
        groups
    }
}

/// Assign whole scenarios to train/val/test with a seeded shuffle and
/// largest-remainder counts. Snapshot-level mixing never happens.
pub fn split_dataset(num_scenarios: usize, fractions: [f64; 3], seed: u64) -> Result<Vec<Split>> {
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config("split_fractions", format!("must sum to 1, got {sum}")));
    }
    if num_scenarios < Split::ALL.len() {
        return Err(Error::invalid(format!(
            "{num_scenarios} scenarios cannot fill {} splits",
            Split::ALL.len()
        )));
    }
    let mut counts = [0usize; 3];
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0;
    for (i, &f) in fractions.iter().enumerate() {
        let exact = f * num_scenarios as f64;
        counts[i] = exact.floor() as usize;
        assigned += counts[i];
        remainders.push((i, exact - exact.floor()));
    }
    remainders.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for k in 0..(num_scenarios - assigned) {
        counts[remainders[k % 3].0] += 1;
    }
    for (i, &c) in counts.iter().enumerate() {
        if fractions[i] > 0.0 && c == 0 {
            return Err(Error::invalid(format!(
                "scenario count {num_scenarios} too small: split {} would be empty",
                Split::ALL[i].name()
            )));
        }
    }

    let mut ids: Vec<usize> = (0..num_scenarios).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..ids.len()).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    let mut out = vec![Split::Train; num_scenarios];
    for (pos, &id) in ids.iter().enumerate() {
        out[id] = if pos < counts[0] {
            Split::Train
        } else if pos < counts[0] + counts[1] {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}

/// Oversample minority classes with replacement until every class present
/// reaches the majority count. Returns indices into `keys`: all originals
/// in order, then the oversampled extras grouped by class.
pub fn resample_balanced(keys: &[u8], seed: u64) -> Vec<usize> {
    let mut classes: Vec<u8> = keys.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut by_class: Vec<(u8, Vec<usize>)> = classes
        .into_iter()
        .map(|c| (c, keys.iter().enumerate().filter(|(_, &k)| k == c).map(|(i, _)| i).collect()))
        .collect();
    let target = by_class.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let mut out: Vec<usize> = (0..keys.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, members) in by_class.iter_mut() {
        for _ in members.len()..target {
            out.push(members[rng.random_range(0..members.len())]);
        }
    }
    out
}

// --- binary record serialization -------------------------------------------

struct RecordWriter<'a, W: Write> {
    w: &'a mut W,
}

impl<W: Write> RecordWriter<'_, W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        self.w.write_all(&[v])?;
        Ok(())
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.w.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.w.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn f32s(&mut self, vs: &[f32]) -> Result<()> {
        for v in vs {
            self.w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

struct RecordReader<'a, R: Read> {
    r: &'a mut R,
    path: &'a str,
}

impl<R: Read> RecordReader<'_, R> {
    fn fail(&self, msg: &str) -> Error {
        Error::Format { path: self.path.to_string(), message: msg.to_string() }
    }
    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.r.read_exact(&mut b)?;
        Ok(b[0])
    }
    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.r.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.r.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut bytes = vec![0u8; n * 4];
        self.r.read_exact(&mut bytes)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn write_record<W: Write>(w: &mut W, rec: &DatasetRecord, header: &DatasetHeader) -> Result<()> {
    let mut out = RecordWriter { w };
    out.u32(rec.scenario)?;
    out.u32(rec.snapshot)?;
    out.f64(rec.time)?;
    out.u8(rec.los as u8)?;
    out.f64(rec.ms_true.x)?;
    out.f64(rec.ms_true.y)?;
    out.u32(rec.optimal_pair.0)?;
    out.u32(rec.optimal_pair.1)?;
    out.f64(rec.optimal_rate)?;
    out.u32(rec.beam_label)?;
    out.u32(rec.bct_label)?;
    out.u8(rec.bct_group)?;
    out.u32(rec.paths.len() as u32)?;
    for p in &rec.paths {
        for v in [p.gain.re, p.gain.im, p.delay, p.aoa, p.aod, p.kind.code() as f64] {
            out.f64(v)?;
        }
    }
    out.u32(rec.detections.len() as u32)?;
    for d in &rec.detections {
        out.u32(d.camera_index as u32)?;
        out.u32(d.object_index as u32)?;
        for v in [
            d.length,
            d.width,
            d.height,
            d.center_ccs.x,
            d.center_ccs.y,
            d.center_ccs.z,
            d.azimuth_ccs,
        ] {
            out.f64(v)?;
        }
    }
    debug_assert_eq!(rec.vdf.rows as u32, header.vdf_rows);
    let vdf32: Vec<f32> = rec.vdf.data.iter().map(|&v| v as f32).collect();
    out.f32s(&vdf32)?;
    match (&rec.sif, header.sif_dims) {
        (Some(sif), Some((h, wd, ch))) => {
            debug_assert_eq!(
                (sif.height as u32, sif.width as u32, sif.channels() as u32),
                (h, wd, ch)
            );
            out.f64(sif.time)?;
            out.f32s(&sif.data)?;
        }
        (None, None) => {}
        _ => return Err(Error::invalid("record SIF presence disagrees with header")),
    }
    out.u32(rec.rates.len() as u32)?;
    out.f32s(&rec.rates)?;
    Ok(())
}

fn read_record<R: Read>(
    r: &mut R,
    header: &DatasetHeader,
    path: &str,
    skip_sif: bool,
) -> Result<DatasetRecord> {
    let mut input = RecordReader { r, path };
    let scenario = input.u32()?;
    let snapshot = input.u32()?;
    let time = input.f64()?;
    let los = input.u8()? != 0;
    let ms_true = Vec2::new(input.f64()?, input.f64()?);
    let optimal_pair = (input.u32()?, input.u32()?);
    let optimal_rate = input.f64()?;
    let beam_label = input.u32()?;
    let bct_label = input.u32()?;
    let bct_group = input.u8()?;
    let n_paths = input.u32()? as usize;
    if n_paths > 4096 {
        return Err(input.fail("implausible path count"));
    }
    let mut paths = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        let re = input.f64()?;
        let im = input.f64()?;
        let delay = input.f64()?;
        let aoa = input.f64()?;
        let aod = input.f64()?;
        let kind_code = input.f64()?;
        let kind = PathKind::from_code(kind_code as u8)
            .ok_or_else(|| input.fail("bad path kind code"))?;
        paths.push(PathParam { gain: Complex64::new(re, im), delay, aoa, aod, kind });
    }
    let n_dets = input.u32()? as usize;
    if n_dets > 65536 {
        return Err(input.fail("implausible detection count"));
    }
    let mut detections = Vec::with_capacity(n_dets);
    for _ in 0..n_dets {
        let camera_index = input.u32()? as usize;
        let object_index = input.u32()? as usize;
        let length = input.f64()?;
        let width = input.f64()?;
        let height = input.f64()?;
        let center_ccs = Vec3::new(input.f64()?, input.f64()?, input.f64()?);
        let azimuth_ccs = input.f64()?;
        detections.push(Detection {
            camera_index,
            object_index,
            length,
            width,
            height,
            center_ccs,
            azimuth_ccs,
        });
    }
    let vdf_data = input.f32s(header.vdf_rows as usize * 4)?;
    let vdf = Vdf {
        rows: header.vdf_rows as usize,
        data: vdf_data.into_iter().map(|v| v as f64).collect(),
    };
    let sif = match header.sif_dims {
        Some((h, w, ch)) => {
            let sif_time = input.f64()?;
            let len = (h * w * ch) as usize;
            if skip_sif {
                std::io::copy(&mut input.r.take(len as u64 * 4), &mut std::io::sink())?;
                None
            } else {
                let data = input.f32s(len)?;
                Some(SceneImageFeature {
                    time: sif_time,
                    height: h as usize,
                    width: w as usize,
                    cameras: ch as usize / 3,
                    data,
                })
            }
        }
        None => None,
    };
    let n_rates = input.u32()? as usize;
    if n_rates != header.pair_set.len() {
        return Err(input.fail("rate table length disagrees with pair set"));
    }
    let rates = input.f32s(n_rates)?;
    Ok(DatasetRecord {
        scenario,
        snapshot,
        time,
        los,
        ms_true,
        detections,
        paths,
        vdf,
        sif,
        optimal_pair,
        optimal_rate,
        beam_label,
        bct_label,
        bct_group,
        rates,
    })
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{DATASET_MAGIC}")?;
    let header_toml =
        toml::to_string(&dataset.header).map_err(|e| Error::invalid(e.to_string()))?;
    w.write_all(header_toml.as_bytes())?;
    writeln!(w, "{BINARY_MARKER}")?;
    for rec in &dataset.records {
        write_record(&mut w, rec, &dataset.header)?;
    }
    w.flush()?;
    Ok(())
}

/// Options for [`read_dataset`]. Skipping SIF payloads keeps memory flat
/// for stages that only need labels, rates, and VDFs.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    pub skip_sif: bool,
}

pub fn read_dataset(path: &Path, options: ReadOptions) -> Result<Dataset> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);

    // header: magic line, TOML until the binary marker line
    let mut header_text = String::new();
    let mut line = Vec::new();
    let mut first = true;
    loop {
        line.clear();
        let mut byte = [0u8; 1];
        loop {
            match r.read(&mut byte)? {
                0 => {
                    return Err(Error::Format {
                        path: display,
                        message: "truncated header".into(),
                    })
                }
                _ => {
                    if byte[0] == b'\n' {
                        break;
                    }
                    line.push(byte[0]);
                }
            }
        }
        let text = String::from_utf8_lossy(&line);
        if first {
            if text.trim() != DATASET_MAGIC {
                return Err(Error::Format {
                    path: display,
                    message: format!("bad magic `{}`", text.trim()),
                });
            }
            first = false;
            continue;
        }
        if text.trim() == BINARY_MARKER {
            break;
        }
        header_text.push_str(&text);
        header_text.push('\n');
    }
    let header: DatasetHeader = toml::from_str(&header_text)
        .map_err(|e| Error::Format { path: display.clone(), message: e.to_string() })?;
    if header.format != DATASET_MAGIC {
        return Err(Error::Format { path: display, message: "header format mismatch".into() });
    }

    let mut records = Vec::with_capacity(header.num_records as usize);
    for _ in 0..header.num_records {
        records.push(read_record(&mut r, &header, &display, options.skip_sif)?);
    }
    Ok(Dataset { header, records })
}
