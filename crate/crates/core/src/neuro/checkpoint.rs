//! Flat little-endian parameter container.
//!
//! ```text
//! magic "CFCK" | u32 version | u32 metadata_len | metadata (UTF-8 JSON)
//! u32 n_entries | n_entries x (u32 name_len | name | u32 rows | u32 cols)
//! payload: each entry's rows*cols f32 values, row-major, in manifest order
//! ```

use std::io::{Read, Write};

use ndarray::Array2;

use super::{cast, Scalar};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Decoded checkpoint: metadata plus named 32-bit tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub metadata: String,
    pub entries: Vec<(String, Array2<f32>)>,
}

impl Checkpoint {
    pub fn manifest(&self) -> Vec<(String, (usize, usize))> {
        self.entries
            .iter()
            .map(|(n, a)| (n.clone(), a.dim()))
            .collect()
    }

    /// Copies every entry into `targets`, which must match names, order and
    /// shapes exactly.
    pub fn load_into<'a, T: Scalar>(
        &self,
        targets: impl IntoIterator<Item = (&'a str, &'a mut Array2<T>)>,
    ) -> Result<()> {
        let targets: Vec<_> = targets.into_iter().collect();
        if targets.len() != self.entries.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, checkpoint holds {}",
                targets.len(),
                self.entries.len()
            )));
        }
        for ((name, target), (stored_name, stored)) in targets.iter().zip(&self.entries) {
            if name != stored_name {
                return Err(Error::Checkpoint(format!(
                    "expected tensor `{name}`, found `{stored_name}`"
                )));
            }
            if target.dim() != stored.dim() {
                return Err(Error::Shape {
                    name: name.to_string(),
                    expected: target.dim(),
                    got: stored.dim(),
                });
            }
        }
        for ((_, target), (_, stored)) in targets.into_iter().zip(&self.entries) {
            target.zip_mut_with(stored, |t, &s| *t = cast(s as f64));
        }
        Ok(())
    }
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn write_checkpoint<'a, W: Write, T: Scalar>(
    mut w: W,
    metadata: &str,
    tensors: impl IntoIterator<Item = (&'a str, &'a Array2<T>)>,
) -> Result<()> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    put_u32(&mut w, metadata.len())?;
    w.write_all(metadata.as_bytes())?;
    put_u32(&mut w, tensors.len())?;
    for (name, t) in &tensors {
        put_u32(&mut w, name.len())?;
        w.write_all(name.as_bytes())?;
        put_u32(&mut w, t.nrows())?;
        put_u32(&mut w, t.ncols())?;
    }
    for (_, t) in &tensors {
        for &v in t.iter() {
            let v = v.to_f32().expect("finite parameter");
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = get_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = get_u32(&mut r)? as usize;
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta)?;
    let metadata = String::from_utf8(meta).map_err(|e| Error::Checkpoint(e.to_string()))?;

    let count = get_u32(&mut r)? as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let len = get_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let rows = get_u32(&mut r)? as usize;
        let cols = get_u32(&mut r)? as usize;
        manifest.push((name, rows, cols));
    }
    let mut entries = Vec::with_capacity(count);
    for (name, rows, cols) in manifest {
        let mut raw = vec![0u8; rows * cols * 4];
        r.read_exact(&mut raw)?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let array = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        entries.push((name, array));
    }
    Ok(Checkpoint {
        version,
        metadata,
        entries,
    })
}
