//! Binary layout: the 8-byte magic `MEMQCKPT`, a little-endian `u32` format
//! version, a little-endian `u64` manifest length, the JSON manifest, then
//! every parameter tensor as little-endian `f32` in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, EvalError};
use crate::agents::{AgentNet, ArchConfig};
use crate::numerics::Rng;
use crate::worldsim::Task;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MEMQCKPT";
const HEADER_LEN: usize = 8 + 4 + 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub arch: ArchConfig,
    pub task: Task,
    pub seed: u64,
    pub step: u64,
    pub tensors: Vec<TensorEntry>,
}

impl Manifest {
    pub fn for_net(net: &AgentNet, task: Task, seed: u64, step: u64) -> Self {
        let ps = net.params();
        Self {
            version: CHECKPOINT_VERSION,
            arch: net.config().clone(),
            task,
            seed,
            step,
            tensors: ps
                .ids()
                .map(|id| TensorEntry {
                    name: ps.name(id).to_string(),
                    shape: ps.value(id).shape().to_vec(),
                })
                .collect(),
        }
    }

    pub fn payload_len(&self) -> usize {
        self.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum::<usize>() * 4
    }
}

pub fn checkpoint_bytes(net: &AgentNet, manifest: &Manifest) -> Result<Vec<u8>, EvalError> {
    let json = serde_json::to_vec(manifest)?;
    let mut out = Vec::with_capacity(HEADER_LEN + json.len() + manifest.payload_len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&manifest.version.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in net.params().values() {
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Writes through a temporary file and a rename, so an existing checkpoint
/// at `path` survives a failed write.
pub fn save_checkpoint(net: &AgentNet, manifest: &Manifest, path: &Path) -> Result<(), EvalError> {
    let bytes = checkpoint_bytes(net, manifest)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Splits a checkpoint into its manifest and `f32` payload.
pub fn parse_checkpoint(bytes: &[u8]) -> Result<(Manifest, Vec<f32>), EvalError> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(EvalError::Format("missing checkpoint header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(EvalError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let json_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let json_end = HEADER_LEN
        .checked_add(json_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| EvalError::Format("manifest runs past the end of the file".into()))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[HEADER_LEN..json_end])?;
    if manifest.version != version {
        return Err(EvalError::Version {
            found: manifest.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let payload = &bytes[json_end..];
    if payload.len() != manifest.payload_len() {
        return Err(EvalError::PayloadLength {
            expected: manifest.payload_len(),
            found: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((manifest, values))
}

fn fill(net: &mut AgentNet, manifest: &Manifest, values: &[f32]) -> Result<(), EvalError> {
    let expected = Manifest::for_net(net, manifest.task, manifest.seed, manifest.step);
    if expected.tensors != manifest.tensors {
        let describe = |m: &Manifest| {
            m.tensors
                .iter()
                .map(|t| format!("{}{:?}", t.name, t.shape))
                .collect::<Vec<_>>()
                .join(" ")
        };
        return Err(EvalError::ShapeMismatch(format!(
            "checkpoint holds [{}], network expects [{}]",
            describe(manifest),
            describe(&expected)
        )));
    }
    let mut it = values.iter();
    for t in net.params_mut().values_mut() {
        for (d, &v) in t.data_mut().iter_mut().zip(&mut it) {
            *d = f64::from(v);
        }
    }
    Ok(())
}

/// Rebuilds the network the checkpoint describes.
pub fn load_checkpoint(path: &Path) -> Result<(Manifest, AgentNet), EvalError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (manifest, values) = parse_checkpoint(&bytes)?;
    let mut net = AgentNet::new(manifest.arch.clone(), &mut Rng::new(0))?;
    fill(&mut net, &manifest, &values)?;
    Ok((manifest, net))
}

/// Loads parameters into an existing network; names and shapes must match.
pub fn load_into(path: &Path, net: &mut AgentNet) -> Result<Manifest, EvalError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (manifest, values) = parse_checkpoint(&bytes)?;
    fill(net, &manifest, &values)?;
    Ok(manifest)
}
