//! Point-cloud object models: whitespace-separated `x y z` lines plus a JSON
//! sidecar with the class id, name and symmetry flag.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::json::{read_json, write_json};
use crate::error::{Error, Result};
use crate::losses::ObjectModel;

pub const POINTS_EXTENSION: &str = "xyz";
pub const META_EXTENSION: &str = "json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub class_id: usize,
    pub name: String,
    pub symmetric: bool,
}

/// Parses `x y z` lines. Blank lines and lines starting with `#` are skipped;
/// line numbers in errors are 1-based.
pub fn parse_points(text: &str, path: &Path) -> Result<Vec<[f64; 3]>> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(err(format!(
                "expected 3 coordinates, found {}",
                tokens.len()
            )));
        }
        let mut p = [0.0; 3];
        for (slot, tok) in p.iter_mut().zip(&tokens) {
            *slot = tok
                .parse::<f64>()
                .map_err(|_| err(format!("non-numeric token {tok:?}")))?;
            if !slot.is_finite() {
                return Err(err(format!("non-finite coordinate {tok:?}")));
            }
        }
        points.push(p);
    }
    Ok(points)
}

pub fn read_model(points_path: &Path, meta_path: &Path) -> Result<ObjectModel<f64>> {
    let meta: ModelMeta = read_json(meta_path)?;
    let text = fs::read_to_string(points_path).map_err(|e| Error::io(points_path, e))?;
    let model = ObjectModel {
        class_id: meta.class_id,
        name: meta.name,
        symmetric: meta.symmetric,
        points: parse_points(&text, points_path)?,
    };
    model
        .validate()
        .map_err(|e| Error::invalid(format!("{}: {e}", points_path.display())))?;
    Ok(model)
}

/// Writes `<dir>/<name>.xyz` and `<dir>/<name>.json`; coordinates use the
/// shortest round-trip decimal form, so reading back is lossless.
pub fn write_model(dir: &Path, model: &ObjectModel<f64>) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let points_path = dir.join(format!("{}.{POINTS_EXTENSION}", model.name));
    let meta_path = dir.join(format!("{}.{META_EXTENSION}", model.name));
    let mut text = String::with_capacity(model.points.len() * 32);
    for p in &model.points {
        text.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    fs::write(&points_path, text).map_err(|e| Error::io(&points_path, e))?;
    let meta = ModelMeta {
        class_id: model.class_id,
        name: model.name.clone(),
        symmetric: model.symmetric,
    };
    write_json(&meta_path, &meta)?;
    Ok((points_path, meta_path))
}

/// Loads every `*.xyz` in `dir` with its `.json` sidecar, keyed by class id.
pub fn read_models_dir(dir: &Path) -> Result<BTreeMap<usize, ObjectModel<f64>>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == POINTS_EXTENSION) {
            paths.push(path);
        }
    }
    paths.sort();
    let mut models = BTreeMap::new();
    for points_path in paths {
        let meta_path = points_path.with_extension(META_EXTENSION);
        let model = read_model(&points_path, &meta_path)?;
        if let Some(prev) = models.insert(model.class_id, model) {
            return Err(Error::Schema {
                path: meta_path,
                json_path: "class_id".into(),
                msg: format!(
                    "class id {} already used by model {:?}",
                    prev.class_id, prev.name
                ),
            });
        }
    }
    if models.is_empty() {
        return Err(Error::invalid(format!(
            "no .{POINTS_EXTENSION} models in {}",
            dir.display()
        )));
    }
    Ok(models)
}
