//! Single-file checkpoint format.
//!
//! Layout (little endian): 8-byte magic, u32 config-JSON length, the
//! [`PadModelConfig`] echo as JSON, u32 parameter count, then per parameter:
//! u16 name length, name, u8 trainable flag, u8 ndim, ndim×u32 dims, f32
//! values. Loading rebuilds the model from the config echo and fills every
//! parameter by name, so a round trip reproduces predictions exactly.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::rc::Rc;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

use super::{build_model, PadModel, PadModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PADCKPT1";

pub fn save_checkpoint(path: impl AsRef<Path>, model: &PadModel<f32>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    w.write_all(CHECKPOINT_MAGIC)?;
    let config = serde_json::to_vec(&model.cfg)
        .map_err(|e| Error::Checkpoint(format!("cannot encode config: {e}")))?;
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(&config)?;
    w.write_all(&(model.store.len() as u32).to_le_bytes())?;
    for (_, param) in model.store.iter() {
        let name = param.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[u8::from(param.trainable)])?;
        let shape = param.value.shape();
        w.write_all(&[shape.len() as u8])?;
        for &d in shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in param.value.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<PadModel<f32>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?;
    let mut r = BufReader::new(file);

    let magic = read_exact::<8>(&mut r)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a model checkpoint (bad magic)",
            path.display()
        )));
    }
    let config_len = u32::from_le_bytes(read_exact::<4>(&mut r)?) as usize;
    let mut config_buf = vec![0u8; config_len];
    r.read_exact(&mut config_buf)
        .map_err(|e| Error::Checkpoint(format!("truncated config: {e}")))?;
    let cfg: PadModelConfig = serde_json::from_slice(&config_buf)
        .map_err(|e| Error::Checkpoint(format!("bad config echo: {e}")))?;

    let mut model = build_model::<f32>(&cfg, 0)?;
    let n_params = u32::from_le_bytes(read_exact::<4>(&mut r)?) as usize;
    if n_params != model.store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {n_params} parameters, model expects {}",
            model.store.len()
        )));
    }
    for _ in 0..n_params {
        let name_len = u16::from_le_bytes(read_exact::<2>(&mut r)?) as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)
            .map_err(|e| Error::Checkpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let _trainable = read_exact::<1>(&mut r)?[0];
        let ndim = read_exact::<1>(&mut r)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(read_exact::<4>(&mut r)?) as usize);
        }
        let id = model.store.find(&name).ok_or_else(|| {
            Error::Checkpoint(format!(
                "parameter '{name}' does not exist in a {} model",
                cfg.architecture.as_str()
            ))
        })?;
        if model.store.value(id).shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "parameter '{name}' shape {:?} does not match model {:?}",
                shape,
                model.store.value(id).shape()
            )));
        }
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(f32::from_le_bytes(read_exact::<4>(&mut r)?));
        }
        let value = ArrayD::from_shape_vec(IxDyn(&shape), data).unwrap();
        *model.store.value_mut(id) = value;
    }
    Ok(model)
}

/// In-place parameter copy used to warm-start a model from another store
/// (same architecture).
pub fn copy_parameters(dst: &mut PadModel<f32>, src: &PadModel<f32>) -> Result<()> {
    if dst.store.len() != src.store.len() {
        return Err(Error::Checkpoint(
            "parameter copy between different architectures".into(),
        ));
    }
    let values: Vec<Rc<ArrayD<f32>>> = src.store.iter().map(|(_, p)| p.value.clone()).collect();
    for (param, value) in dst.store.iter_mut().zip(values) {
        param.value = Rc::new((*value).clone());
    }
    Ok(())
}
