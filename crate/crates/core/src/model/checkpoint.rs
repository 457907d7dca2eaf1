use std::collections::BTreeMap;
use std::path::Path;

use super::config::ModelConfig;
use super::optim::AdamState;
use super::params::ModelParams;
use super::ModelError;

pub const MAGIC: &[u8; 4] = b"UBRT";
pub const FORMAT_VERSION: u32 = 1;

pub type Metadata = BTreeMap<String, serde_json::Value>;

/// Parameters, optional optimizer state and free-form training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub params: ModelParams<f32>,
    pub optimizer: Option<AdamState>,
    pub metadata: Metadata,
}

impl ModelCheckpoint {
    pub fn new(params: ModelParams<f32>) -> Self {
        Self {
            params,
            optimizer: None,
            metadata: Metadata::new(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.params.num_parameters() * 4 + 4096);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        let config = serde_json::to_vec(&self.params.config).expect("config serializes");
        put_blob(&mut out, &config);
        let specs = self.params.specs();
        let arrays = self.params.arrays();
        put_u32(&mut out, specs.len() as u32);
        for (spec, data) in specs.iter().zip(arrays) {
            put_blob(&mut out, spec.name.as_bytes());
            put_u32(&mut out, spec.shape.len() as u32);
            for &d in &spec.shape {
                put_u32(&mut out, d as u32);
            }
            put_f32s(&mut out, data);
        }
        match &self.optimizer {
            None => out.push(0),
            Some(state) => {
                out.push(1);
                out.extend_from_slice(&state.step.to_le_bytes());
                for (m, v) in state.m.iter().zip(&state.v) {
                    put_f32s(&mut out, m);
                    put_f32s(&mut out, v);
                }
            }
        }
        let meta = serde_json::to_vec(&self.metadata).expect("metadata serializes");
        put_blob(&mut out, &meta);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(ModelError::Checkpoint("bad magic; not a model checkpoint".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let config: ModelConfig = serde_json::from_slice(r.blob()?)
            .map_err(|e| ModelError::Checkpoint(format!("config block: {e}")))?;
        config.validate()?;
        let specs = config.array_specs();
        let count = r.u32()? as usize;
        if count != specs.len() {
            return Err(ModelError::Incompatible(format!(
                "checkpoint holds {count} arrays but its config implies {}",
                specs.len()
            )));
        }
        let mut arrays = Vec::with_capacity(count);
        for spec in &specs {
            let name = std::str::from_utf8(r.blob()?)
                .map_err(|_| ModelError::Checkpoint("array name is not UTF-8".into()))?;
            if name != spec.name {
                return Err(ModelError::Incompatible(format!("found array {name}, expected {}", spec.name)));
            }
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            if shape != spec.shape {
                return Err(ModelError::Incompatible(format!(
                    "{name} has shape {shape:?} but the config implies {:?}",
                    spec.shape
                )));
            }
            arrays.push(r.f32s(spec.numel())?);
        }
        let params = ModelParams::from_arrays(&config, arrays)?;
        let optimizer = match r.take(1)?[0] {
            0 => None,
            1 => {
                let step = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                let mut m = Vec::with_capacity(count);
                let mut v = Vec::with_capacity(count);
                for spec in &specs {
                    m.push(r.f32s(spec.numel())?);
                    v.push(r.f32s(spec.numel())?);
                }
                Some(AdamState { step, m, v })
            }
            other => return Err(ModelError::Checkpoint(format!("bad optimizer flag {other}"))),
        };
        let metadata: Metadata = serde_json::from_slice(r.blob()?)
            .map_err(|e| ModelError::Checkpoint(format!("metadata block: {e}")))?;
        if r.pos != bytes.len() {
            return Err(ModelError::Checkpoint(format!(
                "{} trailing bytes after metadata",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            params,
            optimizer,
            metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| ModelError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|e| ModelError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks the stored config against `expected`.
    pub fn load_compatible(path: &Path, expected: &ModelConfig) -> Result<Self, ModelError> {
        let ckpt = Self::load(path)?;
        ckpt.params.config.check_compatible(expected)?;
        Ok(ckpt)
    }
}

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams<f32>,
    optimizer: Option<&AdamState>,
    metadata: &Metadata,
) -> Result<(), ModelError> {
    ModelCheckpoint {
        params: params.clone(),
        optimizer: optimizer.cloned(),
        metadata: metadata.clone(),
    }
    .save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint, ModelError> {
    ModelCheckpoint::load(path)
}

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_blob(out: &mut Vec<u8>, bytes: &[u8]) {
    put_u32(out, bytes.len() as u32);
    out.extend_from_slice(bytes);
}

fn put_f32s(out: &mut Vec<u8>, xs: &[f32]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            ModelError::Checkpoint(format!("truncated checkpoint: needed {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn blob(&mut self) -> Result<&'a [u8], ModelError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, ModelError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| ModelError::Checkpoint("array too large".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}
