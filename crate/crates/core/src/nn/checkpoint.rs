//! JSON checkpoints: a manifest of named, shaped `f64` arrays.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::Parameterized;
use crate::autodiff::Tensor;
use crate::error::{BdgError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Free-form scalar metadata (dimensions, class count, variant).
    pub meta: BTreeMap<String, serde_json::Value>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_model(&mut self, prefix: &str, model: &impl Parameterized) {
        for (name, t) in model.named_params() {
            self.tensors.insert(format!("{prefix}.{name}"), t.clone());
        }
    }

    pub fn has_model(&self, prefix: &str) -> bool {
        let p = format!("{prefix}.");
        self.tensors.keys().any(|k| k.starts_with(&p))
    }

    /// Copies stored arrays into `model`, requiring every name and shape to match.
    pub fn load_model(&self, prefix: &str, model: &mut impl Parameterized) -> Result<()> {
        let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
        for (name, slot) in names.iter().zip(model.params_mut()) {
            let key = format!("{prefix}.{name}");
            let stored = self
                .tensors
                .get(&key)
                .ok_or_else(|| BdgError::Validation(format!("checkpoint lacks {key}")))?;
            if stored.shape() != slot.shape() {
                return Err(BdgError::Validation(format!(
                    "{key}: checkpoint shape {:?} vs model {:?}",
                    stored.shape(),
                    slot.shape()
                )));
            }
            *slot = stored.clone();
        }
        Ok(())
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta
            .get(key)
            .and_then(serde_json::Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| BdgError::Validation(format!("checkpoint meta lacks {key}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| BdgError::Io(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| BdgError::Validation(format!("malformed checkpoint: {e}")))?;
        for (k, t) in &ck.tensors {
            // Tensor derives Deserialize, so re-validate shape/data agreement.
            Tensor::new(t.shape().to_vec(), t.data().to_vec())
                .map_err(|_| BdgError::Validation(format!("{k}: shape does not match data")))?;
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Classifier, Generator};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = Classifier::new(2, 8, 3, &mut rng);
        let g = Generator::xavier(2, 8, &mut rng);
        let mut ck = Checkpoint::new();
        ck.insert_model("c_s", &c);
        ck.insert_model("g_t", &g);
        ck.meta.insert("dim".into(), 2.into());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);

        let mut c2 = Classifier::new(2, 8, 3, &mut rng);
        back.load_model("c_s", &mut c2).unwrap();
        assert_eq!(c2, c);
        assert_eq!(back.meta_usize("dim").unwrap(), 2);
        assert!(!back.has_model("g_s"));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut ck = Checkpoint::new();
        ck.insert_model("c", &Classifier::new(2, 8, 3, &mut rng));
        let mut wrong = Classifier::new(2, 8, 4, &mut rng);
        assert!(matches!(ck.load_model("c", &mut wrong), Err(BdgError::Validation(_))));
        assert!(matches!(ck.load_model("x", &mut wrong), Err(BdgError::Validation(_))));
    }
}
