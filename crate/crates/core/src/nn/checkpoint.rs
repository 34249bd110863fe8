//! Parameter checkpoints: one JSON header line followed by a little-endian
//! f64 blob holding every named block back to back.

use super::{NnError, ParamSet, Result, Tensor};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "lobhawk-params";

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    rows: usize,
    cols: usize,
    /// Offset in f64 elements from the start of the blob.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    params: Vec<Entry>,
}

pub fn encode_checkpoint(params: &ParamSet) -> Vec<u8> {
    let mut entries = Vec::new();
    let mut offset = 0;
    for (name, t) in params.iter() {
        entries.push(Entry { name: name.to_string(), rows: t.rows(), cols: t.cols(), offset });
        offset += t.len();
    }
    let header = Header { format: FORMAT.into(), version: CHECKPOINT_VERSION, params: entries };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for (_, t) in params.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamSet> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| NnError::Checkpoint("missing header line".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| NnError::Checkpoint(format!("bad header: {e}")))?;
    if header.format != FORMAT {
        return Err(NnError::Checkpoint(format!("unexpected format {:?}", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {}", header.version)));
    }
    let blob = &bytes[nl + 1..];
    if blob.len() % 8 != 0 {
        return Err(NnError::Checkpoint("blob length not a multiple of 8".into()));
    }
    let values: Vec<f64> =
        blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut params = ParamSet::new();
    for e in header.params {
        let end = e.offset + e.rows * e.cols;
        if end > values.len() {
            return Err(NnError::Checkpoint(format!("block {} overruns blob", e.name)));
        }
        params.add(e.name, Tensor::from_vec(e.rows, e.cols, values[e.offset..end].to_vec())?);
    }
    Ok(params)
}

pub fn write_checkpoint(path: &Path, params: &ParamSet) -> Result<()> {
    fs::write(path, encode_checkpoint(params))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ParamSet> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_survive_encoding() {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::from_vec(2, 2, vec![1.0, -2.5, f64::MIN_POSITIVE, 1e300]).unwrap());
        ps.add("b", Tensor::column(vec![0.125]));
        let bytes = encode_checkpoint(&ps);
        assert_eq!(decode_checkpoint(&bytes).unwrap(), ps);
        let header_end = bytes.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(bytes.len() - header_end - 1, 5 * 8);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let bytes = br#"{"format":"lobhawk-params","version":99,"params":[]}
"#;
        assert!(decode_checkpoint(bytes).unwrap_err().to_string().contains("version 99"));
    }
}
