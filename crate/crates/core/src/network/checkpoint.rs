//! Binary checkpoint persistence.
//!
//! Little-endian layout, documented in `docs/checkpoint-format.md`:
//!
//! ```text
//! magic   b"SFCK"                    4 bytes
//! version u32                        currently 1
//! spec    u64 fingerprint            from NetworkSpec::fingerprint
//! count   u32 tensor count
//! table   per tensor:
//!           path_len u16, path utf-8 bytes
//!           ndim u8, dims u32 x ndim
//!           offset u64 (bytes into the data section)
//!           len u64 (f32 count)
//! data    f32 values, little-endian, table order
//! ```
//!
//! Tensors are written in parameter-enumeration order (see
//! [`NetworkState::for_each_tensor`]), including batch-norm running
//! statistics, so save -> load -> save is byte-identical.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::spec::NetworkSpec;
use crate::network::state::NetworkState;
use crate::ops::Mode;

const MAGIC: &[u8; 4] = b"SFCK";
const VERSION: u32 = 1;

/// Writes every tensor of `state` (learnables and running statistics).
pub fn save_checkpoint(spec: &NetworkSpec, state: &NetworkState, path: &Path) -> Result<()> {
    let mut entries: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
    state.for_each_tensor(|name, shape, values| {
        entries.push((name.to_string(), shape.to_vec(), values.to_vec()));
    });

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let put = |w: &mut BufWriter<File>, bytes: &[u8]| -> Result<()> {
        w.write_all(bytes).map_err(|e| Error::io(path, e))
    };

    put(&mut w, MAGIC)?;
    put(&mut w, &VERSION.to_le_bytes())?;
    put(&mut w, &spec.fingerprint().to_le_bytes())?;
    put(&mut w, &(entries.len() as u32).to_le_bytes())?;

    let mut offset = 0u64;
    for (name, shape, values) in &entries {
        put(&mut w, &(name.len() as u16).to_le_bytes())?;
        put(&mut w, name.as_bytes())?;
        put(&mut w, &[shape.len() as u8])?;
        for &d in shape {
            put(&mut w, &(d as u32).to_le_bytes())?;
        }
        put(&mut w, &offset.to_le_bytes())?;
        put(&mut w, &(values.len() as u64).to_le_bytes())?;
        offset += (values.len() * 4) as u64;
    }
    for (_, _, values) in &entries {
        for v in values {
            put(&mut w, &v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct TableEntry {
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

/// Reads a checkpoint into a fresh state for `spec`. The file's fingerprint
/// must match the spec's; the loaded state starts in eval mode.
pub fn load_checkpoint(spec: &NetworkSpec, path: &Path) -> Result<NetworkState> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;

    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > buf.len() {
            return Err(Error::format(path, "truncated checkpoint"));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    if take(&mut pos, 4)? != MAGIC {
        return Err(Error::format(path, "bad magic; not a checkpoint file"));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let found = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let expected = spec.fingerprint();
    if found != expected {
        return Err(Error::FingerprintMismatch { expected, found });
    }
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;

    let mut table: HashMap<String, TableEntry> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(&mut pos, name_len)?)
            .map_err(|_| Error::format(path, "non-utf8 tensor path"))?
            .to_string();
        let ndim = take(&mut pos, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
        }
        let offset = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        let len = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        table.insert(name, TableEntry { shape, offset, len });
    }
    let data_start = pos;

    let mut state = NetworkState::zeros(spec)?;
    let mut used = 0usize;
    state.for_each_tensor_mut(|name, values| {
        let entry = table
            .get(name)
            .ok_or_else(|| Error::format(path, format!("tensor `{name}` missing from checkpoint")))?;
        if entry.len as usize != values.len() {
            return Err(Error::format(
                path,
                format!(
                    "tensor `{name}` has {} values, state expects {} (shape {:?})",
                    entry.len,
                    values.len(),
                    entry.shape
                ),
            ));
        }
        let start = data_start + entry.offset as usize;
        let end = start + entry.len as usize * 4;
        if end > buf.len() {
            return Err(Error::format(path, format!("tensor `{name}` data out of bounds")));
        }
        for (i, v) in values.iter_mut().enumerate() {
            let b = &buf[start + i * 4..start + i * 4 + 4];
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
        used += 1;
        Ok(())
    })?;
    if used != count {
        return Err(Error::format(
            path,
            format!("checkpoint has {count} tensors, state consumed {used}"),
        ));
    }
    state.set_mode(Mode::Eval);
    Ok(state)
}
