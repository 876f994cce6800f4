use std::path::Path;

use super::client::ClientData;
use super::dataset::FederatedDataset;
use crate::error::{Error, Result};
use crate::model::ByteReader;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"FSDS";
const VERSION: u32 = 1;

/// Serialize a dataset together with a free-form description of how it was
/// produced. All integers are little-endian u32, features f64.
pub fn write_dataset(ds: &FederatedDataset, echo: &str) -> Vec<u8> {
    let mut out = Vec::new();
    let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    out.extend_from_slice(MAGIC);
    u32le(&mut out, VERSION as usize);
    u32le(&mut out, echo.len());
    out.extend_from_slice(echo.as_bytes());
    u32le(&mut out, ds.num_classes());
    u32le(&mut out, ds.feature_dim());
    u32le(&mut out, ds.num_clients());
    for ids in [ds.train_clients(), ds.heldout_clients()] {
        u32le(&mut out, ids.len());
        for &id in ids {
            u32le(&mut out, id);
        }
    }
    for c in ds.clients() {
        u32le(&mut out, c.len());
        for v in c.features().data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &y in c.labels() {
            u32le(&mut out, y);
        }
    }
    out
}

pub fn read_dataset(bytes: &[u8]) -> Result<(FederatedDataset, String)> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a dataset container".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let echo_len = r.u32()? as usize;
    let echo = String::from_utf8(r.take(echo_len)?.to_vec())
        .map_err(|_| Error::Format("dataset description is not utf-8".into()))?;
    let k = r.u32()? as usize;
    let p = r.u32()? as usize;
    let n = r.u32()? as usize;
    let ids = |r: &mut ByteReader| -> Result<Vec<usize>> {
        let len = r.u32()? as usize;
        (0..len).map(|_| Ok(r.u32()? as usize)).collect()
    };
    let train = ids(&mut r)?;
    let heldout = ids(&mut r)?;
    let mut clients = Vec::with_capacity(n);
    for _ in 0..n {
        let rows = r.u32()? as usize;
        if rows.saturating_mul(p).saturating_mul(8) > bytes.len() {
            return Err(Error::Format(format!("client block of {rows} rows exceeds the file")));
        }
        let feats = (0..rows * p).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let labels = (0..rows).map(|_| Ok(r.u32()? as usize)).collect::<Result<Vec<_>>>()?;
        clients.push(ClientData::new(Tensor::matrix(rows, p, feats)?, labels)?);
    }
    if !r.is_done() {
        return Err(Error::Format("trailing bytes after dataset".into()));
    }
    Ok((FederatedDataset::new(clients, k, p, train, heldout)?, echo))
}

pub fn save_dataset(ds: &FederatedDataset, echo: &str, path: &Path) -> Result<()> {
    std::fs::write(path, write_dataset(ds, echo)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<(FederatedDataset, String)> {
    read_dataset(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
