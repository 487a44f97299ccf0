//! Parameter checkpoint files.
//!
//! Layout: magic `SRGW`, u32 version, u32 tensor count, then per tensor a u16
//! name length, the UTF-8 name, u8 rank, u32 dims, and f32 little-endian data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SRGW";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, tensors: &[(String, &Tensor)]) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, tensor) in tensors {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(TensorError::Checkpoint(format!(
                "tensor name too long ({} bytes)",
                bytes.len()
            )));
        }
        if tensor.shape().len() > u8::MAX as usize {
            return Err(TensorError::Checkpoint(format!(
                "tensor rank {} exceeds format limit",
                tensor.shape().len()
            )));
        }
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&[tensor.shape().len() as u8])?;
        for &d in tensor.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Vec<(String, Tensor)>> {
    let mut r = Offset { inner: r, pos: 0 };
    let magic = r.bytes_exact::<4>("magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(TensorError::CheckpointParse {
            offset: 0,
            detail: format!("bad magic {magic:?}, expected \"SRGW\""),
        });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(TensorError::CheckpointParse {
            offset: 4,
            detail: format!("unsupported version {version}"),
        });
    }
    let count = r.u32("tensor count")?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = r.u16("name length")? as usize;
        let name_bytes = r.vec_exact(name_len, "name")?;
        let name = String::from_utf8(name_bytes).map_err(|e| TensorError::CheckpointParse {
            offset: r.pos,
            detail: format!("tensor name is not UTF-8: {e}"),
        })?;
        let rank = r.bytes_exact::<1>("rank")?[0] as usize;
        if rank == 0 {
            return Err(TensorError::CheckpointParse {
                offset: r.pos,
                detail: format!("tensor \"{name}\" has rank 0"),
            });
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = vec![0.0f32; numel];
        for v in data.iter_mut() {
            *v = f32::from_le_bytes(r.bytes_exact::<4>("tensor data")?);
        }
        let tensor = Tensor::new(shape, data).map_err(|e| TensorError::CheckpointParse {
            offset: r.pos,
            detail: format!("tensor \"{name}\": {e}"),
        })?;
        out.push((name, tensor));
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, tensors: &[(String, &Tensor)]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, tensors)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let file = File::open(path)?;
    read_checkpoint(BufReader::new(file))
}

/// Reader wrapper that tracks the byte offset for error reporting.
struct Offset<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> Offset<R> {
    fn bytes_exact<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| TensorError::CheckpointParse {
                offset: self.pos,
                detail: format!("truncated while reading {what}"),
            })?;
        self.pos += N as u64;
        Ok(buf)
    }

    fn vec_exact(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| TensorError::CheckpointParse {
                offset: self.pos,
                detail: format!("truncated while reading {what}"),
            })?;
        self.pos += n as u64;
        Ok(buf)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes_exact::<2>(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes_exact::<4>(what)?))
    }
}
