//! Binary parameter checkpoints.
//!
//! Layout: the 8-byte magic `MPNASGCN`, a little-endian `u32` format version,
//! a little-endian `u32` header length, a JSON header (config, vocabulary
//! size and tensor manifest), then every parameter as a little-endian `f64`
//! in layout order.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::params::{GcnConfig, GcnParams, ParamLayout, TensorSpec};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"MPNASGCN";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: GcnConfig,
    vocab_size: usize,
    tensors: Vec<TensorSpec>,
}

pub fn write_checkpoint<W: Write>(params: &GcnParams, mut out: W) -> std::io::Result<()> {
    let layout = params.layout();
    let header = Header {
        config: layout.config.clone(),
        vocab_size: layout.vocab_size,
        tensors: layout.tensors(),
    };
    let header = serde_json::to_vec(&header).expect("serializable header");
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u32).to_le_bytes())?;
    out.write_all(&header)?;
    let mut body = Vec::with_capacity(8 * layout.len());
    for v in super::model::Parameters::values(params) {
        body.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&body)
}

pub fn read_checkpoint<R: Read>(mut input: R, origin: &str) -> Result<GcnParams> {
    let bad = |detail: String| Error::Parse {
        path: origin.to_string(),
        detail,
    };
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| bad(format!("read failed: {e}")))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a parameter checkpoint".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body_start = 16 + header_len;
    if bytes.len() < body_start {
        return Err(bad("truncated header".into()));
    }
    let header: Header =
        serde_json::from_slice(&bytes[16..body_start]).map_err(|e| bad(format!("header: {e}")))?;
    let layout = ParamLayout::new(header.config, header.vocab_size)?;
    if layout.tensors() != header.tensors {
        return Err(bad(
            "tensor manifest does not match the configuration".into()
        ));
    }
    let body = &bytes[body_start..];
    if body.len() != 8 * layout.len() {
        return Err(bad(format!(
            "expected {} parameter bytes, found {}",
            8 * layout.len(),
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    GcnParams::from_values(Arc::new(layout), values)
}

pub fn save_checkpoint(params: &GcnParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(params, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GcnParams> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file), &path.display().to_string())
}
