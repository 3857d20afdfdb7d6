//! Checkpoint persistence.
//!
//! Binary layout: magic `ACGF`, u32 little-endian version (currently 1),
//! u64 little-endian JSON header length, the JSON header (vocabulary token
//! list, model hyperparameters, metadata, tensor manifest), then raw
//! little-endian f64 values concatenated in manifest order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelDims, PolicyParams};
use super::PolicyError;
use crate::vocab::Vocabulary;

const MAGIC: [u8; 4] = *b"ACGF";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    tokens: Vec<String>,
    model: ModelHeader,
    meta: BTreeMap<String, String>,
    tensors: Vec<TensorInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    vocab_size: usize,
    embed_dim: usize,
    hidden_dim: usize,
    num_layers: usize,
    critic: bool,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

/// Write params + vocabulary + metadata; the file is written to a sibling
/// temporary path and renamed into place.
pub fn save_checkpoint(
    path: &Path,
    params: &PolicyParams,
    vocab: &Vocabulary,
    meta: &BTreeMap<String, String>,
) -> Result<(), PolicyError> {
    if vocab.len() != params.dims.vocab {
        return Err(PolicyError::ShapeMismatch(format!(
            "vocabulary size {} vs model vocab {}",
            vocab.len(),
            params.dims.vocab
        )));
    }
    let tensors = params.tensors();
    let header = Header {
        tokens: vocab.tokens().to_vec(),
        model: ModelHeader {
            vocab_size: params.dims.vocab,
            embed_dim: params.dims.embed,
            hidden_dim: params.dims.hidden,
            num_layers: params.dims.layers,
            critic: params.dims.critic,
        },
        meta: meta.clone(),
        tensors: tensors
            .iter()
            .map(|(name, shape, _)| TensorInfo {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| PolicyError::Header(e.to_string()))?;

    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&header_bytes)?;
        for (_, _, data) in &tensors {
            for value in *data {
                w.write_all(&value.to_le_bytes())?;
            }
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a checkpoint back; tensors are validated against the manifest and
/// the manifest against the declared model shape.
pub fn load_checkpoint(
    path: &Path,
) -> Result<(PolicyParams, Vocabulary, BTreeMap<String, String>), PolicyError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, PolicyError::BadMagic)?;
    if magic != MAGIC {
        return Err(PolicyError::BadMagic);
    }
    let mut version = [0u8; 4];
    read_exact_or(&mut r, &mut version, PolicyError::TruncatedFile)?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(PolicyError::VersionUnsupported(version));
    }
    let mut header_len = [0u8; 8];
    read_exact_or(&mut r, &mut header_len, PolicyError::TruncatedFile)?;
    let header_len = u64::from_le_bytes(header_len) as usize;
    let mut header_bytes = vec![0u8; header_len];
    read_exact_or(&mut r, &mut header_bytes, PolicyError::TruncatedFile)?;
    let header: Header =
        serde_json::from_slice(&header_bytes).map_err(|e| PolicyError::Header(e.to_string()))?;

    let dims = ModelDims {
        vocab: header.model.vocab_size,
        embed: header.model.embed_dim,
        hidden: header.model.hidden_dim,
        layers: header.model.num_layers,
        critic: header.model.critic,
    };
    if header.tokens.len() != dims.vocab {
        return Err(PolicyError::ManifestShapeMismatch(format!(
            "{} tokens vs vocab_size {}",
            header.tokens.len(),
            dims.vocab
        )));
    }
    let vocab = Vocabulary::from_lines(header.tokens.clone())
        .map_err(|e| PolicyError::Header(e.to_string()))?;

    let mut params = PolicyParams::zeros(dims);
    {
        let expected: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        if expected.len() != header.tensors.len() {
            return Err(PolicyError::ManifestShapeMismatch(format!(
                "{} tensors declared, model needs {}",
                header.tensors.len(),
                expected.len()
            )));
        }
        for ((name, shape), info) in expected.iter().zip(&header.tensors) {
            if *name != info.name || *shape != info.shape {
                return Err(PolicyError::ManifestShapeMismatch(format!(
                    "tensor `{}` {:?} does not match model `{name}` {shape:?}",
                    info.name, info.shape
                )));
            }
        }
    }
    for (_, data) in params.tensors_mut() {
        let mut buf = [0u8; 8];
        for value in data.iter_mut() {
            read_exact_or(&mut r, &mut buf, PolicyError::TruncatedFile)?;
            *value = f64::from_le_bytes(buf);
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(PolicyError::ManifestShapeMismatch(
            "trailing data after manifest tensors".to_string(),
        ));
    }
    Ok((params, vocab, header.meta))
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], err: PolicyError) -> Result<(), PolicyError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            err
        } else {
            PolicyError::Io(e)
        }
    })
}
