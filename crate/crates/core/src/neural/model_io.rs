//! Binary model files.
//!
//! All integers and floats are little-endian.
//!
//! | field | type |
//! |-------|------|
//! | magic `OULSTM\0\0` | 8 bytes |
//! | format version (1) | u32 |
//! | hidden size | u32 |
//! | layer count (2) | u32 |
//! | ELU α | f64 |
//! | normalizer shift, scale | f64, f64 |
//! | input sequence length | u64 |
//! | tensor count | u32 |
//! | per tensor: rank, dims, row-major data | u32, u64 × rank, f64 × Π dims |
//!
//! Tensors follow [`Weights::tensors`] order: for each layer `w_ih (4H×I)`,
//! `w_hh (4H×H)`, `b_ih (4H)`, `b_hh (4H)`; then `head_w (2×H)`, `head_b (2)`.

use std::io::{Read, Write};
use std::path::Path;

use super::lstm::{LstmModel, Normalizer, Weights, N_LAYERS};
use crate::error::{OuError, Result};

pub const MAGIC: &[u8; 8] = b"OULSTM\0\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_model<W: Write>(model: &LstmModel, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(model.hidden_size() as u32).to_le_bytes())?;
    w.write_all(&(model.weights.layers.len() as u32).to_le_bytes())?;
    w.write_all(&model.elu_alpha.to_le_bytes())?;
    w.write_all(&model.normalizer.shift.to_le_bytes())?;
    w.write_all(&model.normalizer.scale.to_le_bytes())?;
    w.write_all(&(model.seq_len as u64).to_le_bytes())?;
    let tensors = model.weights.tensors();
    let shapes = model.weights.tensor_shapes();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (t, (rows, cols)) in tensors.iter().zip(shapes) {
        if cols == 0 {
            w.write_all(&1u32.to_le_bytes())?;
            w.write_all(&(rows as u64).to_le_bytes())?;
        } else {
            w.write_all(&2u32.to_le_bytes())?;
            w.write_all(&(rows as u64).to_le_bytes())?;
            w.write_all(&(cols as u64).to_le_bytes())?;
        }
        for v in t.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| OuError::ModelFormat(format!("truncated file: {e}")))?;
    Ok(b)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

pub fn read_model<R: Read>(mut r: R) -> Result<LstmModel> {
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != MAGIC {
        return Err(OuError::ModelFormat("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(OuError::ModelFormat(format!("unsupported version {version}")));
    }
    let hidden = read_u32(&mut r)? as usize;
    let n_layers = read_u32(&mut r)? as usize;
    if n_layers != N_LAYERS {
        return Err(OuError::ModelFormat(format!("expected {N_LAYERS} layers, found {n_layers}")));
    }
    if hidden == 0 || hidden > 1 << 16 {
        return Err(OuError::ModelFormat(format!("implausible hidden size {hidden}")));
    }
    let elu_alpha = read_f64(&mut r)?;
    let normalizer = Normalizer { shift: read_f64(&mut r)?, scale: read_f64(&mut r)? };
    let seq_len = read_u64(&mut r)? as usize;
    let mut weights = Weights::zeros(hidden);
    let shapes = weights.tensor_shapes();
    let count = read_u32(&mut r)? as usize;
    if count != shapes.len() {
        return Err(OuError::ModelFormat(format!("expected {} tensors, found {count}", shapes.len())));
    }
    for (i, (t, (rows, cols))) in weights.tensors_mut().into_iter().zip(shapes).enumerate() {
        let rank = read_u32(&mut r)?;
        let expected_rank = if cols == 0 { 1 } else { 2 };
        if rank != expected_rank {
            return Err(OuError::ModelFormat(format!("tensor {i}: expected rank {expected_rank}, found {rank}")));
        }
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            dims.push(read_u64(&mut r)? as usize);
        }
        let want: Vec<usize> = if cols == 0 { vec![rows] } else { vec![rows, cols] };
        if dims != want {
            return Err(OuError::ModelFormat(format!("tensor {i}: expected dims {want:?}, found {dims:?}")));
        }
        for v in t.iter_mut() {
            *v = read_f64(&mut r)?;
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(OuError::ModelFormat("trailing bytes after last tensor".into()));
    }
    LstmModel::new(weights, elu_alpha, normalizer, seq_len).map_err(|e| OuError::ModelFormat(e.to_string()))
}

pub fn save_model(model: &LstmModel, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_model(model, std::io::BufWriter::new(f))
}

pub fn load_model(path: &Path) -> Result<LstmModel> {
    let f = std::fs::File::open(path)?;
    read_model(std::io::BufReader::new(f))
}
