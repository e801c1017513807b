//! Fixture directories: one `SceneAnnotation` JSON file per scene plus an
//! `index.json` listing them in order.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use promptplan::SceneAnnotation;
use serde::{Deserialize, Serialize};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub image_id: String,
    pub file: String,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureIndex {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub instances: [usize; 2],
    pub scenes: Vec<IndexEntry>,
}

pub fn read_scene(path: &Path) -> Result<SceneAnnotation> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    SceneAnnotation::from_reader(BufReader::new(f))
        .with_context(|| format!("reading scene {}", path.display()))
}

/// Scene files under `path`: the index order if there is one, otherwise
/// every `*.json` sorted by name. A plain file is a single scene.
pub fn scene_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let index = path.join(INDEX_FILE);
    if index.is_file() {
        let idx: FixtureIndex = crate::fsutil::read_json(&index)?;
        return Ok(idx.scenes.iter().map(|e| path.join(&e.file)).collect());
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(path).with_context(|| format!("listing {}", path.display()))? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "json") && p.file_name() != Some(INDEX_FILE.as_ref())
        {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Every scene under `path`; duplicate image ids are rejected.
pub fn load(path: &Path) -> Result<Vec<SceneAnnotation>> {
    let scenes = scene_files(path)?
        .iter()
        .map(|p| read_scene(p))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = std::collections::HashSet::new();
    for s in &scenes {
        if !seen.insert(s.image_id.as_str()) {
            bail!("duplicate image id {:?} in {}", s.image_id, path.display());
        }
    }
    Ok(scenes)
}
