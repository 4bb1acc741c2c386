//! Binary network file.
//!
//! ```text
//! magic        8 bytes   "AMLASMLP"
//! version      u32 LE    1
//! layers       u32 LE    L
//! L records    u32 LE in, u32 LE out, u8 activation (0 tanh, 1 relu, 2 identity)
//! params       u64 LE    P, followed by P f64 LE values
//!                        (per layer: row-major out×in weights, then bias)
//! checksum     32 bytes  SHA-256 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use super::mlp::{Activation, Layer, Mlp};
use super::AgentError;

const MAGIC: &[u8; 8] = b"AMLASMLP";
const VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

/// Architecture recorded at the start of a model file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelHeader {
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
}

pub fn encode_model(net: &Mlp) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + net.param_count() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        buf.extend_from_slice(&(layer.input_dim() as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.output_dim() as u32).to_le_bytes());
        buf.push(layer.activation.code());
    }
    buf.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for p in net.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AgentError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(AgentError::Integrity(format!(
                "model file truncated at byte {} (needed {n} more)",
                self.pos
            ))),
        }
    }

    fn u32(&mut self) -> Result<u32, AgentError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, AgentError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<ModelHeader, AgentError> {
    if r.take(MAGIC.len())? != MAGIC {
        return Err(AgentError::Integrity("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(AgentError::Integrity(format!(
            "unsupported model file version {version}"
        )));
    }
    let n_layers = r.u32()? as usize;
    if n_layers == 0 {
        return Err(AgentError::Integrity(
            "model file declares no layers".into(),
        ));
    }
    let mut dims = Vec::with_capacity(n_layers + 1);
    let mut activations = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let input = r.u32()? as usize;
        let output = r.u32()? as usize;
        let code = r.take(1)?[0];
        let act = Activation::from_code(code).ok_or_else(|| {
            AgentError::Integrity(format!("layer {i}: unknown activation code {code}"))
        })?;
        match dims.last() {
            None => dims.push(input),
            Some(&prev) if prev != input => {
                return Err(AgentError::Integrity(format!(
                    "layer {i} input {input} does not chain with previous output {prev}"
                )))
            }
            _ => {}
        }
        dims.push(output);
        activations.push(act);
    }
    Ok(ModelHeader { dims, activations })
}

pub fn decode_model(bytes: &[u8]) -> Result<Mlp, AgentError> {
    if bytes.len() < CHECKSUM_LEN {
        return Err(AgentError::Integrity("model file truncated".into()));
    }
    let mut r = Reader { bytes, pos: 0 };
    let header = read_header(&mut r)?;
    let count = r.u64()? as usize;
    let expected: usize = header.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    if count != expected {
        return Err(AgentError::Integrity(format!(
            "parameter count {count} does not match architecture ({expected})"
        )));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        params.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
    }
    let body_end = r.pos;
    let stored = r.take(CHECKSUM_LEN)?;
    if r.pos != bytes.len() {
        return Err(AgentError::Integrity(format!(
            "{} trailing bytes after checksum",
            bytes.len() - r.pos
        )));
    }
    if Sha256::digest(&bytes[..body_end]).as_slice() != stored {
        return Err(AgentError::Integrity("model checksum mismatch".into()));
    }

    let mut values = params.into_iter();
    let layers = header
        .dims
        .windows(2)
        .zip(&header.activations)
        .map(|(w, &activation)| {
            let weights: Vec<f64> = values.by_ref().take(w[0] * w[1]).collect();
            let bias: Vec<f64> = values.by_ref().take(w[1]).collect();
            Layer {
                weights: Array2::from_shape_vec((w[1], w[0]), weights).expect("sized"),
                bias: Array1::from(bias),
                activation,
            }
        })
        .collect();
    Mlp::new(layers).map_err(|e| AgentError::Integrity(e.to_string()))
}

pub fn save_model(path: &Path, net: &Mlp) -> Result<(), AgentError> {
    fs::write(path, encode_model(net))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Mlp, AgentError> {
    decode_model(&fs::read(path)?)
}

/// Loads a model and checks it has exactly the layer widths `dims`.
pub fn load_model_expecting(path: &Path, dims: &[usize]) -> Result<Mlp, AgentError> {
    let net = load_model(path)?;
    if net.dims() != dims {
        return Err(AgentError::Integrity(format!(
            "architecture mismatch: expected {dims:?}, file holds {:?}",
            net.dims()
        )));
    }
    Ok(net)
}

/// Reads only the architecture header.
pub fn inspect_model(path: &Path) -> Result<ModelHeader, AgentError> {
    let bytes = fs::read(path)?;
    read_header(&mut Reader {
        bytes: &bytes,
        pos: 0,
    })
}
