//! Binary checkpoint: `CSNN`, version, JSON network spec, epoch, then the
//! parameters as little-endian f64.

use std::io::{Read, Write};

use super::network::{Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CSNN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<T: Scalar, W: Write>(mut w: W, net: &Network<T>, epoch: u64) -> Result<()> {
    let io = |e| Error::io("writing checkpoint", e);
    let spec = serde_json::to_vec(net.spec()).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(spec.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&spec).map_err(io)?;
    w.write_all(&epoch.to_le_bytes()).map_err(io)?;
    w.write_all(&(net.num_params() as u64).to_le_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(net.num_params() * 8);
    for p in net.params() {
        buf.extend_from_slice(&p.to_f64_lossy().to_le_bytes());
    }
    w.write_all(&buf).map_err(io)
}

/// Returns the network and the stored epoch.
pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<(Network<T>, u64)> {
    let mut offset = 0u64;
    let mut take = |n: usize, what: &str| -> Result<Vec<u8>> {
        let mut b = vec![0u8; n];
        r.read_exact(&mut b).map_err(|e| Error::Corruption {
            offset,
            record: None,
            msg: format!("truncated {what}: {e}"),
        })?;
        offset += n as u64;
        Ok(b)
    };
    let magic = take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a network checkpoint".into()));
    }
    let version = u32::from_le_bytes(take(4, "version")?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let len = u32::from_le_bytes(take(4, "header length")?.try_into().unwrap()) as usize;
    let spec: NetworkSpec =
        serde_json::from_slice(&take(len, "network spec")?).map_err(|e| Error::Format(e.to_string()))?;
    let epoch = u64::from_le_bytes(take(8, "epoch")?.try_into().unwrap());
    let count = u64::from_le_bytes(take(8, "parameter count")?.try_into().unwrap()) as usize;
    let blob = take(count * 8, "parameters")?;
    let params = blob
        .chunks_exact(8)
        .map(|b| T::from_f64_lossy(f64::from_le_bytes(b.try_into().unwrap())))
        .collect();
    Ok((Network::from_params(spec, params)?, epoch))
}
