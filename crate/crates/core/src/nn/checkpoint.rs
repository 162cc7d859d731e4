//! Checkpoints: `manifest.txt` lists `name d0 [d1 ..]` per parameter, and
//! each parameter's values sit in `<name>.f32` as little-endian float32.

use std::fs;
use std::path::Path;

use super::tensor::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.txt";

pub fn save_checkpoint(params: &ParamStore, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut manifest = String::new();
    for (name, t) in params.names.iter().zip(&params.tensors) {
        manifest.push_str(name);
        for d in &t.shape {
            manifest.push_str(&format!(" {d}"));
        }
        manifest.push('\n');
        let bytes: Vec<u8> = t.data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        let path = dir.join(format!("{name}.f32"));
        fs::write(&path, bytes).map_err(|e| Error::file(&path, e))?;
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::file(&path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<ParamStore> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
    let mut store = ParamStore::default();
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(name) = fields.next() else { continue };
        let shape = fields
            .map(|f| f.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad shape for `{name}`"),
            })?;
        let path = dir.join(format!("{name}.f32"));
        let bytes = fs::read(&path).map_err(|e| Error::file(&path, e))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::TruncatedRecord { offset: bytes.len() / 4 * 4 });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        store.add(name, Tensor::from_vec(&shape, data)?);
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = std::env::temp_dir().join(format!("ckpt-test-{}", std::process::id()));
        let mut p = ParamStore::default();
        p.add("a.kernel", Tensor::from_vec(&[1, 1, 2, 3], vec![0.5, -1.0, 2.0, 0.25, 3.0, -0.125]).unwrap());
        p.add("a.bias", Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        save_checkpoint(&p, &dir).unwrap();
        assert_eq!(load_checkpoint(&dir).unwrap(), p);
        fs::remove_dir_all(&dir).unwrap();
    }
}
