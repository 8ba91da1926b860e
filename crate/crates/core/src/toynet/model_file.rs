//! Binary model file format.
//!
//! Layout (all integers little-endian):
//! magic "GPNT", format version u16, layer count u32, then per layer:
//! kind id u8, in_channels u32, out_channels u32, param count u32,
//! params as f32. Loaders reject unknown versions and kind ids.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::toynet::{LayerKind, LayerSpec, ToyGenerator};

pub const MODEL_MAGIC: &[u8; 4] = b"GPNT";
pub const MODEL_FORMAT_VERSION: u16 = 1;

pub fn save_model(model: &ToyGenerator, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MODEL_MAGIC);
    bytes.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for layer in model.layers() {
        bytes.push(layer.kind.id());
        bytes.extend_from_slice(&(layer.in_channels as u32).to_le_bytes());
        bytes.extend_from_slice(&(layer.out_channels as u32).to_le_bytes());
        bytes.extend_from_slice(&(layer.params.len() as u32).to_le_bytes());
        for p in &layer.params {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ToyGenerator> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cursor = Cursor { bytes: &bytes, pos: 0 };

    let magic = cursor.take(4)?;
    if magic != MODEL_MAGIC {
        return Err(Error::MalformedModel("bad magic".into()));
    }
    let version = u16::from_le_bytes(cursor.take(2)?.try_into().unwrap());
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let layer_count = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap()) as usize;
    if layer_count == 0 || layer_count > 1024 {
        return Err(Error::MalformedModel(format!("implausible layer count {layer_count}")));
    }

    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let kind_id = cursor.take(1)?[0];
        let kind = LayerKind::from_id(kind_id)
            .ok_or_else(|| Error::MalformedModel(format!("unknown layer kind id {kind_id}")))?;
        let in_channels = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap()) as usize;
        let out_channels = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap()) as usize;
        let param_count = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap()) as usize;
        if param_count != kind.param_count(in_channels, out_channels) {
            return Err(Error::MalformedModel(format!(
                "param count {param_count} does not match {kind:?} {in_channels}->{out_channels}"
            )));
        }
        let raw = cursor.take(param_count * 4)?;
        let params: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        layers.push(
            LayerSpec::new(kind, in_channels, out_channels, params)
                .map_err(|e| Error::MalformedModel(e.to_string()))?,
        );
    }
    if cursor.pos != bytes.len() {
        return Err(Error::MalformedModel("trailing bytes".into()));
    }
    ToyGenerator::new(layers, "loaded", 0).map_err(|e| Error::MalformedModel(e.to_string()))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::MalformedModel("unexpected end of file".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_layers() {
        let model = ToyGenerator::default_translator(8, 123);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gpnt");
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model.layers(), back.layers());
    }

    #[test]
    fn unknown_version_is_rejected() {
        let model = ToyGenerator::default_translator(4, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gpnt");
        save_model(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 0xff; // bump version
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_model(&path), Err(Error::UnsupportedVersion(_))));
    }

    #[test]
    fn truncation_is_detected() {
        let model = ToyGenerator::default_translator(4, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gpnt");
        save_model(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::MalformedModel(_))));
    }

    #[test]
    fn bad_magic_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gpnt");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(load_model(&path), Err(Error::MalformedModel(_))));
    }

    #[test]
    fn model_bytes_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.gpnt");
        let p2 = dir.path().join("b.gpnt");
        save_model(&ToyGenerator::default_translator(8, 7), &p1).unwrap();
        save_model(&ToyGenerator::default_translator(8, 7), &p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }
}
