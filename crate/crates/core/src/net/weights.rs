//! Binary weight file.
//!
//! ```text
//! magic        4 bytes   "OCTX"
//! version      u16 LE    1
//! layer count  u16 LE    number of parameterised layers (6)
//! descriptors  per layer: kind u8 (1 = conv, 2 = dense), then the weight
//!              tensor dims as u32 LE (4 dims for conv, 2 for dense)
//! payload      every parameter as f32 LE, layer order, weights then bias
//! crc32        u32 LE    CRC-32 (IEEE) of the payload bytes
//! ```

use std::path::Path;

use thiserror::Error;

use super::{Layer, OctNet};

pub const MAGIC: &[u8; 4] = b"OCTX";
pub const FORMAT_VERSION: u16 = 1;

const KIND_CONV: u8 = 1;
const KIND_DENSE: u8 = 2;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("not a weight file: bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported weight format version {0}")]
    UnsupportedVersion(u16),
    #[error("weight file truncated: needed {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("weight file has {0} unexpected trailing bytes")]
    TrailingData(usize),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("layer {layer}: {detail}")]
    Architecture { layer: usize, detail: String },
    #[error("weight file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn descriptors(net: &OctNet) -> Vec<(u8, Vec<u32>)> {
    net.layers()
        .iter()
        .filter_map(|l| match l {
            Layer::Conv { weights, .. } => Some((KIND_CONV, weights.shape().iter().map(|&d| d as u32).collect())),
            Layer::Dense { weights, .. } => Some((KIND_DENSE, weights.shape().iter().map(|&d| d as u32).collect())),
            _ => None,
        })
        .collect()
}

/// Size in bytes of the parameter payload.
pub fn payload_len(net: &OctNet) -> usize {
    net.param_count() * 4
}

pub fn to_bytes(net: &OctNet) -> Vec<u8> {
    let descs = descriptors(net);
    let mut out = Vec::with_capacity(payload_len(net) + 128);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(descs.len() as u16).to_le_bytes());
    for (kind, dims) in &descs {
        out.push(*kind);
        for d in dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
    }
    let payload_start = out.len();
    for t in net.params() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[payload_start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightError> {
        if self.pos + n > self.buf.len() {
            return Err(WeightError::Truncated {
                needed: self.pos + n,
                available: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WeightError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WeightError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WeightError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<OctNet, WeightError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(WeightError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(WeightError::UnsupportedVersion(version));
    }
    let mut net = OctNet::build(0);
    let expected = descriptors(&net);
    let count = r.u16()? as usize;
    if count != expected.len() {
        return Err(WeightError::Architecture {
            layer: count.min(expected.len()),
            detail: format!("file has {count} parameterised layers, network has {}", expected.len()),
        });
    }
    for (i, (kind, dims)) in expected.iter().enumerate() {
        let k = r.u8()?;
        if k != *kind {
            return Err(WeightError::Architecture {
                layer: i,
                detail: format!("layer kind {k}, expected {kind}"),
            });
        }
        let mut got = Vec::with_capacity(dims.len());
        for _ in dims {
            got.push(r.u32()?);
        }
        if &got != dims {
            return Err(WeightError::Architecture {
                layer: i,
                detail: format!("shape {got:?}, expected {dims:?}"),
            });
        }
    }
    let payload = r.take(payload_len(&net))?;
    let stored = r.u32()?;
    if r.pos != bytes.len() {
        return Err(WeightError::TrailingData(bytes.len() - r.pos));
    }
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(WeightError::Checksum { stored, computed });
    }
    let flat: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    net.set_flat_params(&flat).expect("payload length checked against the architecture");
    Ok(net)
}

pub fn save_weights(net: &OctNet, path: impl AsRef<Path>) -> Result<(), WeightError> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(net)).map_err(|source| WeightError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<OctNet, WeightError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| WeightError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_bytes(&bytes)
}
