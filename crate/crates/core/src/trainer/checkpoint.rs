//! Binary checkpoints for the online/target/predictor networks.
//!
//! Layout (little-endian): `"DCBM"`, u32 version=1, u32 network count (3),
//! then for each network in the order online, target, predictor: u32 layer
//! dim count, that many u32 dims, then its parameters as f64 in layer order
//! (weights `out x in` row-major, then biases).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::network::MlpNetwork;
use super::DualNetworks;
use crate::error::{Error, Result};

pub const DCBM_MAGIC: &[u8; 4] = b"DCBM";
pub const DCBM_VERSION: u32 = 1;

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Shape(format!("{v} does not fit in u32")))
}

pub fn write_checkpoint<W: Write>(nets: &DualNetworks, w: &mut W) -> Result<()> {
    w.write_all(DCBM_MAGIC)?;
    w.write_all(&DCBM_VERSION.to_le_bytes())?;
    w.write_all(&3u32.to_le_bytes())?;
    for net in [&nets.online, &nets.target, &nets.predictor] {
        w.write_all(&u32_of(net.dims().len())?.to_le_bytes())?;
        for &d in net.dims() {
            w.write_all(&u32_of(d)?.to_le_bytes())?;
        }
        for p in net.params() {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format("checkpoint truncated".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_net<R: Read>(r: &mut R) -> Result<MlpNetwork> {
    let count = read_u32(r)? as usize;
    if !(2..=64).contains(&count) {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let dims = (0..count).map(|_| read_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let total: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let mut params = Vec::with_capacity(total);
    let mut b = [0u8; 8];
    for _ in 0..total {
        r.read_exact(&mut b).map_err(|_| Error::Format("checkpoint truncated".into()))?;
        params.push(f64::from_le_bytes(b));
    }
    MlpNetwork::from_params(&dims, params)
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<DualNetworks> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("checkpoint truncated".into()))?;
    if &magic != DCBM_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = read_u32(r)?;
    if version != DCBM_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    if read_u32(r)? != 3 {
        return Err(Error::Format("checkpoint must hold 3 networks".into()));
    }
    let online = read_net(r)?;
    let target = read_net(r)?;
    let predictor = read_net(r)?;
    DualNetworks::from_parts(online, target, predictor)
}

pub fn save_checkpoint(nets: &DualNetworks, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(nets, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DualNetworks> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
