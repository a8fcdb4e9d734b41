//! Flat binary checkpoints with a JSON shape sidecar.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Network, NetworkConfig, Parameters};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FMPCKPT1";

#[derive(Serialize, Deserialize)]
struct LayerShape {
    subnet: Option<usize>,
    layer: usize,
    weight: [usize; 2],
    bias: usize,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config_hash: String,
    param_count: usize,
    config: NetworkConfig,
    layers: Vec<LayerShape>,
}

/// Path of the JSON description written next to a checkpoint.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Writes `magic | config hash (64 hex bytes) | count (u64) | values (f64)`,
/// all little-endian, plus the sidecar.
pub fn save_checkpoint(path: &Path, network: &Network, params: &Parameters) -> Result<()> {
    network.check_params(params.as_slice())?;
    let hash = network.config().hash();
    let mut buf = Vec::with_capacity(8 + 64 + 8 + 8 * params.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(hash.as_bytes());
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;

    let mut layers = Vec::new();
    for (i, subnet) in network.subnets().iter().enumerate() {
        for (l, spec) in subnet.iter().enumerate() {
            layers.push(LayerShape {
                subnet: Some(i),
                layer: l,
                weight: [spec.rows, spec.cols],
                bias: spec.rows,
                offset: spec.weight_offset,
            });
        }
    }
    if let Some(head) = network.head() {
        layers.push(LayerShape {
            subnet: None,
            layer: 0,
            weight: [head.rows, head.cols],
            bias: head.rows,
            offset: head.weight_offset,
        });
    }
    let sidecar = Sidecar {
        config_hash: hash,
        param_count: params.len(),
        config: network.config().clone(),
        layers,
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a checkpoint written for the same network configuration.
pub fn load_checkpoint(path: &Path, network: &Network) -> Result<Parameters> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |why: &str| Error::Parse(format!("checkpoint {}: {why}", path.display()));
    if buf.len() < 80 || &buf[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let hash = std::str::from_utf8(&buf[8..72]).map_err(|_| bad("corrupt header"))?;
    if hash != network.config().hash() {
        return Err(Error::config(
            "checkpoint",
            "written for a different network configuration",
        ));
    }
    let count = u64::from_le_bytes(buf[72..80].try_into().expect("eight bytes")) as usize;
    if buf.len() != 80 + 8 * count {
        return Err(bad("truncated payload"));
    }
    let values: Vec<f64> = buf[80..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    network.check_params(&values)?;
    Ok(Parameters::from_vec(values))
}
