use std::path::{Path, PathBuf};

use super::config::Config;
use super::train::{BatchLog, EpochLog};
use crate::checkpoint::{Checkpoint, Tensor};
use crate::error::{Error, Result};
use crate::model::{EmbeddingTable, Role};

/// One run: `config.resolved.toml`, `checkpoints/`, `logs/`.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["checkpoints", "logs"] {
            let p = root.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(Self { root })
    }

    /// Opens an existing run without creating anything.
    pub fn open(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn meta_checkpoint(&self) -> PathBuf {
        self.root.join("checkpoints/meta.hypl")
    }

    pub fn model_checkpoint(&self) -> PathBuf {
        self.root.join("checkpoints/model.hypl")
    }

    pub fn log(&self, name: &str) -> PathBuf {
        self.root.join("logs").join(name)
    }

    pub fn write_config(&self, cfg: &Config) -> Result<()> {
        let p = self.root.join("config.resolved.toml");
        std::fs::write(&p, cfg.to_toml()).map_err(|e| Error::io(&p, e))
    }

    pub fn save_tables(&self, users: &EmbeddingTable, items: &EmbeddingTable, tags: Option<&EmbeddingTable>) -> Result<()> {
        let mut c = Checkpoint::new();
        for t in [Some(users), Some(items), tags].into_iter().flatten() {
            c.push(Tensor::from_f64(format!("{}.embedding", t.role().as_str()), vec![t.rows(), t.dim()], t.values())?)?;
        }
        c.save(self.model_checkpoint())
    }

    /// User and item tables of the model checkpoint.
    pub fn load_tables(&self) -> Result<(EmbeddingTable, EmbeddingTable)> {
        let c = Checkpoint::load(self.model_checkpoint())?;
        let get = |role: Role| -> Result<EmbeddingTable> {
            let name = format!("{}.embedding", role.as_str());
            let t = c.get(&name).ok_or_else(|| Error::Checkpoint {
                path: self.model_checkpoint(),
                reason: format!("missing tensor {name}"),
            })?;
            if t.dims.len() != 2 {
                return Err(Error::Checkpoint { path: self.model_checkpoint(), reason: format!("{name} is not a matrix") });
            }
            EmbeddingTable::from_values(role, t.dims[0], t.dims[1], t.to_f64())
        };
        Ok((get(Role::User)?, get(Role::Item)?))
    }
}

pub fn write_epoch_log(path: &Path, rows: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_epoch_log(path: &Path) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_batch_log(path: &Path, rows: &[BatchLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
