//! Binary tensor checkpoints.
//!
//! Layout: the magic `EMCK`, a little-endian `u32` format version, a `u64`
//! length followed by a JSON header (tensor names, shapes and caller
//! metadata), then for every tensor its values and its optimizer
//! accumulator as little-endian `f64`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::{ParamTensor, Parameterized};
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"EMCK";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

pub fn write_checkpoint<T, M, W>(out: &mut W, model: &M, meta: serde_json::Value) -> Result<()>
where
    T: Scalar,
    M: Parameterized<T> + ?Sized,
    W: Write,
{
    let tensors = model.tensors();
    let header = Header {
        format_version: FORMAT_VERSION,
        meta,
        tensors: tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::new();
    for t in tensors {
        for v in t.values.iter().chain(&t.opt_state) {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads a checkpoint header and its tensors (gradients zeroed).
pub fn read_checkpoint<T: Scalar, R: Read>(input: &mut R) -> Result<(serde_json::Value, Vec<ParamTensor<T>>)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    if header.format_version != version {
        return Err(Error::Format("header version disagrees with preamble".into()));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    let mut read_f64s = |n: usize| -> Result<Vec<T>> {
        let mut raw = vec![0u8; n * 8];
        input.read_exact(&mut raw)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    };
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        let mut t = ParamTensor::zeros(entry.name, &entry.shape);
        t.values = read_f64s(n)?;
        t.opt_state = read_f64s(n)?;
        tensors.push(t);
    }
    Ok((header.meta, tensors))
}

/// Copies loaded tensors into `model`, requiring identical names and shapes.
pub fn load_into<T: Scalar, M: Parameterized<T> + ?Sized>(model: &mut M, loaded: Vec<ParamTensor<T>>) -> Result<()> {
    let mut slots = model.tensors_mut();
    if slots.len() != loaded.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {} tensors, model expects {}",
            loaded.len(),
            slots.len()
        )));
    }
    for (slot, t) in slots.iter_mut().zip(loaded) {
        if slot.name != t.name || slot.shape != t.shape {
            return Err(Error::Format(format!(
                "tensor `{}` {:?} does not match `{}` {:?}",
                t.name, t.shape, slot.name, slot.shape
            )));
        }
        slot.values = t.values;
        slot.opt_state = t.opt_state;
        slot.zero_grad();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut model = vec![
            ParamTensor::<f64>::glorot("w", &[3, 4], 4, 3, &mut rng),
            ParamTensor::<f64>::glorot("b", &[3], 1, 3, &mut rng),
        ];
        model[0].opt_state = vec![0.25; 12];
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &model, serde_json::json!({"agent": 3})).unwrap();
        let (meta, loaded) = read_checkpoint::<f64, _>(&mut bytes.as_slice()).unwrap();
        assert_eq!(meta["agent"], 3);
        let mut fresh = vec![ParamTensor::<f64>::zeros("w", &[3, 4]), ParamTensor::<f64>::zeros("b", &[3])];
        load_into(&mut fresh, loaded).unwrap();
        assert_eq!(fresh, model);
    }

    #[test]
    fn version_mismatch_is_reported() {
        let model = vec![ParamTensor::<f64>::zeros("w", &[1])];
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &model, serde_json::Value::Null).unwrap();
        bytes[4] = 99;
        let err = read_checkpoint::<f64, _>(&mut bytes.as_slice()).unwrap_err();
        assert!(matches!(err, Error::FormatVersion { found: 99, .. }));
    }

    #[test]
    fn shape_mismatch_on_load() {
        let model = vec![ParamTensor::<f64>::zeros("w", &[2])];
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &model, serde_json::Value::Null).unwrap();
        let (_, loaded) = read_checkpoint::<f64, _>(&mut bytes.as_slice()).unwrap();
        let mut other = vec![ParamTensor::<f64>::zeros("w", &[3])];
        assert!(load_into(&mut other, loaded).is_err());
    }
}
