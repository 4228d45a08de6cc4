use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConditionNorm, DiffusionSchedule};
use crate::ditmoo::{DiTConfig, DitMoo};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Everything needed to sample from a trained model. Stored as JSON; floats round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    version: u32,
    pub config: DiTConfig,
    pub steps: usize,
    pub s_offset: f64,
    pub norm: ConditionNorm,
    /// Original-unit box the network's unit coordinates map to.
    pub bounds: Vec<(f64, f64)>,
    params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(net: &DitMoo, sched: &DiffusionSchedule, norm: &ConditionNorm, bounds: &[(f64, f64)]) -> Self {
        let params = net
            .config
            .layout()
            .into_iter()
            .zip(&net.params)
            .map(|((name, rows, cols), p)| NamedTensor {
                name,
                rows,
                cols,
                data: p.as_slice().to_vec(),
            })
            .collect();
        Self {
            version: VERSION,
            config: net.config,
            steps: sched.steps,
            s_offset: sched.s_offset,
            norm: norm.clone(),
            bounds: bounds.to_vec(),
            params,
        }
    }

    pub fn network(&self) -> Result<DitMoo> {
        self.config.validate()?;
        let layout = self.config.layout();
        if layout.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                layout.len(),
                self.params.len()
            )));
        }
        let mut params = Vec::with_capacity(layout.len());
        for ((name, r, c), t) in layout.into_iter().zip(&self.params) {
            if t.name != name || t.rows != r || t.cols != c {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` ({}x{}) does not match expected `{name}` ({r}x{c})",
                    t.name, t.rows, t.cols
                )));
            }
            params.push(Matrix::from_vec(r, c, t.data.clone())?);
        }
        Ok(DitMoo {
            config: self.config,
            params,
        })
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::cosine(self.steps, self.s_offset)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        if c.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", c.version)));
        }
        Ok(c)
    }
}
