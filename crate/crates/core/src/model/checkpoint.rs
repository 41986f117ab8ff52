use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LatentState, ModelVariant, Penalties, StnnParameters};
use crate::dataset::{NormalizationRecord, RelationSet};
use crate::error::{Error, Result};

const FORMAT: &str = "stnn-checkpoint/1";

/// Everything needed to forecast from or inspect a trained model.
///
/// Matrices are stored as `{rows, cols, data}` with row-major data. Floats are written with
/// the shortest representation that parses back to the same bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub variant: ModelVariant,
    pub series: usize,
    pub dims: usize,
    pub latent_dim: usize,
    pub relation_labels: Vec<String>,
    pub penalties: Penalties,
    pub seed: u64,
    pub relations: RelationSet,
    pub params: StnnParameters,
    pub latent: LatentState,
    #[serde(default)]
    pub norm: Option<NormalizationRecord>,
}

impl Checkpoint {
    pub fn new(
        variant: ModelVariant,
        penalties: Penalties,
        seed: u64,
        relations: RelationSet,
        params: StnnParameters,
        latent: LatentState,
        norm: Option<NormalizationRecord>,
    ) -> Result<Self> {
        params.validate(&relations, variant)?;
        Ok(Self {
            format: FORMAT.into(),
            variant,
            series: relations.n(),
            dims: params.dims(),
            latent_dim: params.latent_dim(),
            relation_labels: relations.labels(),
            penalties,
            seed,
            relations,
            params,
            latent,
            norm,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != FORMAT {
            return Err(Error::Validation(format!("unsupported checkpoint format {:?}", ckpt.format)));
        }
        ckpt.params.validate(&ckpt.relations, ckpt.variant)?;
        if ckpt.latent.series() != ckpt.series || ckpt.latent.latent_dim() != ckpt.latent_dim {
            return Err(Error::Validation("latent state does not match checkpoint shape".into()));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::build_powers;
    use crate::model::init_model;
    use crate::numerics::{Matrix, RngState};

    #[test]
    fn save_load_is_exact() {
        let w = Matrix::from_fn(4, 4, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 });
        let rel = build_powers(&w, 2).unwrap();
        let (latent, params) =
            init_model(4, 2, 3, &rel, ModelVariant::StnnDynamicGate, 5, &mut RngState::new(8)).unwrap();
        let ckpt = Checkpoint::new(
            ModelVariant::StnnDynamicGate,
            Penalties { lambda: 0.1, gamma: 0.0 },
            8,
            rel,
            params,
            latent,
            None,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"variant\": \"stnn-gate\""));
    }

    #[test]
    fn rejects_foreign_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"format\": \"other\"}").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
