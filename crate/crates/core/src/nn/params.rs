use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Mat;
use crate::error::{Error, Result};

/// Bumped whenever the checkpoint layout changes.
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: [usize; 2],
    data: Vec<f64>,
}

/// On-disk checkpoint: a versioned, self-describing weight map.
#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    schema_version: u32,
    kind: String,
    meta: Value,
    params: BTreeMap<String, TensorRecord>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter `{name}`");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total scalar parameter count.
    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Mat> {
        self.values.iter_mut()
    }

    pub fn fill(&mut self, v: f64) {
        for m in &mut self.values {
            m.fill(v);
        }
    }

    pub fn to_checkpoint(&self, kind: &str, meta: Value) -> String {
        let params = self
            .names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| {
                (
                    n.clone(),
                    TensorRecord {
                        shape: [v.nrows(), v.ncols()],
                        data: v.iter().copied().collect(),
                    },
                )
            })
            .collect();
        let file = CheckpointFile {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            kind: kind.to_string(),
            meta,
            params,
        };
        serde_json::to_string(&file).expect("checkpoint serialization")
    }

    /// Reads `(kind, meta)` from a checkpoint without touching weights.
    pub fn checkpoint_header(text: &str) -> Result<(String, Value)> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if file.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!(
                "schema version {} does not match supported version {CHECKPOINT_SCHEMA_VERSION}",
                file.schema_version
            )));
        }
        Ok((file.kind, file.meta))
    }

    /// Overwrites every registered parameter from a checkpoint. Names and
    /// shapes must match exactly.
    pub fn load_checkpoint(&mut self, text: &str, kind: &str) -> Result<Value> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if file.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!(
                "schema version {} does not match supported version {CHECKPOINT_SCHEMA_VERSION}",
                file.schema_version
            )));
        }
        if file.kind != kind {
            return Err(Error::Checkpoint(format!("expected a `{kind}` checkpoint, found `{}`", file.kind)));
        }
        if file.params.len() != self.names.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                file.params.len(),
                self.names.len()
            )));
        }
        for (name, value) in self.names.iter().zip(self.values.iter_mut()) {
            let rec = file
                .params
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if rec.shape != [value.nrows(), value.ncols()] || rec.data.len() != value.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected [{}, {}]",
                    rec.shape,
                    value.nrows(),
                    value.ncols()
                )));
            }
            for (dst, src) in value.iter_mut().zip(&rec.data) {
                *dst = *src;
            }
        }
        Ok(file.meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::rows;

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let mut s = ParamStore::default();
        s.add("a", rows(&[[0.1, 1.0 / 3.0], [-2.5e-17, 7.0]]));
        s.add("b", rows(&[[std::f64::consts::PI]]));
        let text = s.to_checkpoint("test", serde_json::json!({"k": 1}));
        let mut t = s.clone();
        t.fill(0.0);
        let meta = t.load_checkpoint(&text, "test").unwrap();
        assert_eq!(meta["k"], 1);
        for id in s.ids() {
            assert_eq!(s.value(id), t.value(id));
        }
    }

    #[test]
    fn mismatched_kind_version_and_shape_are_refused() {
        let mut s = ParamStore::default();
        s.add("a", rows(&[[1.0, 2.0]]));
        let text = s.to_checkpoint("fol", Value::Null);
        assert!(s.clone().load_checkpoint(&text, "ego").is_err());
        let bumped = text.replace("\"schema_version\":1", "\"schema_version\":99");
        assert!(s.clone().load_checkpoint(&bumped, "fol").is_err());
        let mut other = ParamStore::default();
        other.add("a", rows(&[[1.0], [2.0]]));
        assert!(other.load_checkpoint(&text, "fol").is_err());
    }
}
