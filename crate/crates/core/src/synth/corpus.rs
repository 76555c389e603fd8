use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{clip_id, generate_clip, GeneratorConfig};
use crate::error::{Error, Result};
use crate::par;
use crate::scene::{load_clip, save_clip, Clip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// `manifest.json` at the corpus root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub config: GeneratorConfig,
}

impl CorpusManifest {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            field: "manifest".into(),
            msg: e.to_string(),
        })
    }

    pub fn clip_path(root: &Path, split: Split, id: &str) -> PathBuf {
        root.join(split.dir_name()).join(format!("{id}.jsonl"))
    }

    /// Loads every clip of one split, in manifest order.
    pub fn load_split(&self, root: &Path, split: Split) -> Result<Vec<Clip>> {
        let ids = self.ids(split);
        par::map(ids, |id| load_clip(Self::clip_path(root, split, id)))
            .into_iter()
            .collect()
    }
}

/// Train/val/test sizes in the 4:2:1 ratio.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 4 / 7;
    let val = n * 2 / 7;
    (train, val, n - train - val)
}

/// Writes `num_clips` clips under `out/{train,val,test}/` plus a manifest.
pub fn generate_corpus(config: &GeneratorConfig, out: &Path) -> Result<CorpusManifest> {
    config.validate()?;
    let (n_train, n_val, _) = split_sizes(config.num_clips);
    for split in Split::ALL {
        let dir = out.join(split.dir_name());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let split_of = |i: usize| {
        if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        }
    };
    let written: Vec<Result<()>> = par::map_range(config.num_clips, |i| {
        let clip = generate_clip(config, i);
        save_clip(&clip, CorpusManifest::clip_path(out, split_of(i), &clip.clip_id))
    });
    written.into_iter().collect::<Result<Vec<_>>>()?;

    let mut manifest = CorpusManifest {
        seed: config.seed,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        config: config.clone(),
    };
    for i in 0..config.num_clips {
        let id = clip_id(i);
        match split_of(i) {
            Split::Train => manifest.train.push(id),
            Split::Val => manifest.val.push(id),
            Split::Test => manifest.test.push(id),
        }
    }
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
