//! JSONL prediction records exchanged between `predict`, `predict-ego` and
//! `eval`.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::BBox;

/// One agent forecast: mean boxes per future step plus, for learned models,
/// the Gaussian spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRecord {
    pub method: String,
    pub clip_id: String,
    pub t_start: usize,
    pub track_id: u32,
    /// `[c_u, c_v, l_u, l_v]` per step, normalized.
    pub boxes: Vec<[f64; 4]>,
    /// `[sigma_cu, sigma_cv, sigma_lu, sigma_lv]` per step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sigma: Vec<[f64; 4]>,
    /// `[rho_center, rho_size]` per step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rho: Vec<[f64; 2]>,
}

impl BoxRecord {
    pub fn mean_boxes(&self) -> Vec<BBox> {
        self.boxes.iter().map(|b| BBox::from_slice(b)).collect()
    }

    pub fn key(&self) -> (String, usize, u32) {
        (self.clip_id.clone(), self.t_start, self.track_id)
    }
}

/// One ego forecast with its importance trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoRecord {
    pub method: String,
    pub clip_id: String,
    pub t_start: usize,
    /// `[alpha, omega]` per future step.
    pub steps: Vec<[f64; 2]>,
    /// Per step, `(track_id, w)` for every agent considered.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub importance: Vec<Vec<(u32, f64)>>,
}

impl EgoRecord {
    pub fn key(&self) -> (String, usize) {
        (self.clip_id.clone(), self.t_start)
    }
}

pub fn write_jsonl<T: Serialize>(records: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::invalid(format!("serializing record: {e}")))?;
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text)
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                field: "record".into(),
                msg: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_line_numbers() {
        let r = BoxRecord {
            method: "EP".into(),
            clip_id: "c".into(),
            t_start: 5,
            track_id: 2,
            boxes: vec![[0.1, 0.2, 0.3, 0.4]],
            sigma: Vec::new(),
            rho: Vec::new(),
        };
        let text = format!("{}\n\n{{\"method\":1}}\n", serde_json::to_string(&r).unwrap());
        assert!(!text.contains("sigma"));
        let err = parse_jsonl::<BoxRecord>(&text).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let back: Vec<BoxRecord> = parse_jsonl(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, vec![r]);
    }
}
