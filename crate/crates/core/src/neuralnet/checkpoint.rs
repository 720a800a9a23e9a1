use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetConfig, NetError, Params, QNetwork};
use crate::scalar::Scalar;

pub const MANIFEST: &str = "manifest.json";
const TENSOR_DIR: &str = "tensors";
const FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub dtype: String,
    pub config: NetConfig,
    pub catalog_hash: String,
    pub tensors: Vec<TensorEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, NetError> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?)
    }
}

impl<T: Scalar> QNetwork<T> {
    /// Writes `manifest.json` and one little-endian file per tensor.
    pub fn save(&self, dir: &Path, catalog_hash: &str) -> Result<(), NetError> {
        fs::create_dir_all(dir.join(TENSOR_DIR))?;
        let names = self.params.names();
        let shapes = self.params.shapes();
        let mut tensors = Vec::with_capacity(names.len());
        for ((name, shape), data) in names.into_iter().zip(shapes).zip(self.params.slices()) {
            let file = format!("{TENSOR_DIR}/{name}.bin");
            let mut bytes = Vec::with_capacity(data.len() * T::BYTES);
            for &v in data {
                v.write_le(&mut bytes);
            }
            fs::write(dir.join(&file), bytes)?;
            tensors.push(TensorEntry { name, shape, file });
        }
        let manifest = Manifest {
            format: FORMAT,
            dtype: T::DTYPE.to_string(),
            config: self.config.clone(),
            catalog_hash: catalog_hash.to_string(),
            tensors,
        };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Reads a checkpoint written with the same element type.
    pub fn load(dir: &Path) -> Result<(Self, Manifest), NetError> {
        let manifest = Manifest::read(dir)?;
        if manifest.format != FORMAT {
            return Err(NetError::Checkpoint(format!("unsupported format {}", manifest.format)));
        }
        if manifest.dtype != T::DTYPE {
            return Err(NetError::Checkpoint(format!(
                "stored as {}, requested {}",
                manifest.dtype,
                T::DTYPE
            )));
        }
        manifest.config.validate()?;
        let mut params = Params::<T>::zeros(&manifest.config);
        let names = params.names();
        let shapes = params.shapes();
        if manifest.tensors.len() != names.len() {
            return Err(NetError::Checkpoint(format!(
                "{} tensors listed, {} expected",
                manifest.tensors.len(),
                names.len()
            )));
        }
        for (((entry, name), shape), dst) in manifest.tensors.iter().zip(&names).zip(&shapes).zip(params.slices_mut()) {
            if &entry.name != name || &entry.shape != shape {
                return Err(NetError::Checkpoint(format!(
                    "tensor {} {:?} does not match {} {:?}",
                    entry.name, entry.shape, name, shape
                )));
            }
            let bytes = fs::read(dir.join(&entry.file))?;
            if bytes.len() != dst.len() * T::BYTES {
                return Err(NetError::Checkpoint(format!("{} has {} bytes", entry.name, bytes.len())));
            }
            for (d, chunk) in dst.iter_mut().zip(bytes.chunks_exact(T::BYTES)) {
                *d = T::read_le(chunk);
            }
        }
        Ok((QNetwork::from_parts(manifest.config.clone(), params), manifest))
    }
}
