//! Model checkpoint files: a magic line, a JSON metadata header (kind,
//! architecture, dataset binding, seed, tensor layout), then the parameter
//! tensors as little-endian f64 in the declared order.

use super::bct_net::{BctNet, BctNetSpec};
use super::vdban::{VdbanModel, VdbanSpec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const CKPT_MAGIC: &[u8] = b"beamlab-ckpt-v1\n";

/// Binding of a checkpoint to the dataset it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointBinding {
    pub dataset_config_hash: String,
    /// Fingerprint of the restricted beam-pair set (the label space).
    pub pair_set_fingerprint: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: String,
    pub binding: CheckpointBinding,
    pub vdban_spec: Option<VdbanSpec>,
    pub bct_spec: Option<BctNetSpec>,
    /// (name, element count) in storage order.
    pub tensors: Vec<(String, usize)>,
    /// Input scaling applied by the model: the VDF azimuth column is
    /// divided by pi inside the forward pass; locations enter raw.
    pub input_scaling: String,
}

fn write_file(path: &Path, meta: &CheckpointMeta, flat: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    let json = serde_json::to_vec(meta).map_err(|e| Error::invalid(e.to_string()))?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in flat {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_file(path: &Path) -> Result<(CheckpointMeta, Vec<f64>)> {
    let display = path.display().to_string();
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = vec![0u8; CKPT_MAGIC.len()];
    r.read_exact(&mut magic)?;
    if magic != CKPT_MAGIC {
        return Err(Error::Format { path: display, message: "bad checkpoint magic".into() });
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let json_len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json)?;
    let meta: CheckpointMeta = serde_json::from_slice(&json)
        .map_err(|e| Error::Format { path: display.clone(), message: e.to_string() })?;
    let total: usize = meta.tensors.iter().map(|(_, n)| n).sum();
    let mut bytes = vec![0u8; total * 8];
    r.read_exact(&mut bytes)?;
    let flat: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((meta, flat))
}

pub fn save_vdban(path: &Path, model: &VdbanModel, binding: CheckpointBinding) -> Result<()> {
    let tensors = model.tensors().iter().map(|(n, t)| (n.clone(), t.len())).collect();
    let meta = CheckpointMeta {
        kind: "vdban".into(),
        binding,
        vdban_spec: Some(model.spec.clone()),
        bct_spec: None,
        tensors,
        input_scaling: "vdf azimuth column / pi".into(),
    };
    write_file(path, &meta, &model.flatten())
}

pub fn load_vdban(path: &Path) -> Result<(VdbanModel, CheckpointMeta)> {
    let (meta, flat) = read_file(path)?;
    if meta.kind != "vdban" {
        return Err(Error::invalid(format!("expected a vdban checkpoint, found `{}`", meta.kind)));
    }
    let spec = meta
        .vdban_spec
        .clone()
        .ok_or_else(|| Error::invalid("vdban checkpoint lacks an architecture record"))?;
    let mut model = VdbanModel::zeros(spec);
    if model.num_params() != flat.len() {
        return Err(Error::invalid("checkpoint tensor sizes disagree with the architecture"));
    }
    model.set_from_flat(&flat);
    Ok((model, meta))
}

pub fn save_bct(path: &Path, net: &BctNet, binding: CheckpointBinding) -> Result<()> {
    let meta = CheckpointMeta {
        kind: "bct".into(),
        binding,
        vdban_spec: None,
        bct_spec: Some(net.spec.clone()),
        tensors: net.tensor_layout(),
        input_scaling: "pooled pixels / 255".into(),
    };
    write_file(path, &meta, &net.to_flat())
}

pub fn load_bct(path: &Path) -> Result<(BctNet, CheckpointMeta)> {
    let (meta, flat) = read_file(path)?;
    if meta.kind != "bct" {
        return Err(Error::invalid(format!("expected a bct checkpoint, found `{}`", meta.kind)));
    }
    let spec = meta
        .bct_spec
        .clone()
        .ok_or_else(|| Error::invalid("bct checkpoint lacks an architecture record"))?;
    let mut net = BctNet::zeros(spec);
    let expected: usize = net.tensor_layout().iter().map(|(_, n)| n).sum();
    if expected != flat.len() {
        return Err(Error::invalid("checkpoint tensor sizes disagree with the architecture"));
    }
    net.load_flat(&flat);
    Ok((net, meta))
}
