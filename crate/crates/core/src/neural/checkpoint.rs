//! One-file checkpoints: magic bytes, manifest length (u64 LE), a JSON
//! manifest, then every array as little-endian `f32` in manifest order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::net::{BN_EPS, BN_MOMENTUM};
use super::{Net, NetSpec, NeuralError};

const MAGIC: &[u8; 8] = b"SPSHCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct NetEntry {
    name: String,
    spec: NetSpec,
    arrays: Vec<ArrayEntry>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    batchnorm_momentum: f64,
    batchnorm_eps: f64,
    nets: Vec<NetEntry>,
    metadata: Value,
}

/// A named network restored from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointNet {
    pub name: String,
    pub net: Net<f32>,
}

fn io(e: std::io::Error) -> NeuralError {
    NeuralError::Checkpoint(e.to_string())
}

pub fn write_checkpoint<W: Write>(mut out: W, nets: &[(&str, &Net<f32>)], metadata: Value) -> Result<(), NeuralError> {
    let manifest = Manifest {
        version: VERSION,
        batchnorm_momentum: BN_MOMENTUM,
        batchnorm_eps: BN_EPS,
        nets: nets
            .iter()
            .map(|(name, net)| NetEntry {
                name: name.to_string(),
                spec: net.spec().clone(),
                arrays: net
                    .named_arrays()
                    .into_iter()
                    .map(|(name, shape, _)| ArrayEntry { name, shape })
                    .collect(),
            })
            .collect(),
        metadata,
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&json).map_err(io)?;
    let mut buf = Vec::new();
    for (_, net) in nets {
        for (_, _, data) in net.named_arrays() {
            buf.clear();
            data.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
            out.write_all(&buf).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Networks in file order and the caller's metadata.
pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(Vec<CheckpointNet>, Value), NeuralError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(NeuralError::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(io)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return Err(NeuralError::Checkpoint(format!("manifest length {len} is implausible")));
    }
    let mut json = vec![0u8; len as usize];
    input.read_exact(&mut json).map_err(io)?;
    let manifest: Manifest = serde_json::from_slice(&json).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    if manifest.version != VERSION {
        return Err(NeuralError::Checkpoint(format!("unsupported version {}", manifest.version)));
    }
    let mut nets = Vec::new();
    for entry in manifest.nets {
        let mut net = Net::<f32>::new(entry.spec, 0)?;
        let expected: Vec<(String, Vec<usize>)> =
            net.named_arrays().into_iter().map(|(n, s, _)| (n, s)).collect();
        let listed: Vec<(String, Vec<usize>)> = entry.arrays.into_iter().map(|a| (a.name, a.shape)).collect();
        if expected != listed {
            return Err(NeuralError::Checkpoint(format!(
                "array list of net '{}' does not match its layer specs",
                entry.name
            )));
        }
        for arr in net.arrays_mut() {
            let mut bytes = vec![0u8; arr.len() * 4];
            input.read_exact(&mut bytes).map_err(io)?;
            for (x, b) in arr.iter_mut().zip(bytes.chunks_exact(4)) {
                *x = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
        }
        nets.push(CheckpointNet { name: entry.name, net });
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(io)? != 0 {
        return Err(NeuralError::Checkpoint("trailing bytes after the last array".into()));
    }
    Ok((nets, manifest.metadata))
}
