//! File formats and synthetic data.
//!
//! A scene directory holds `quat.dpt`, `direction.dpt`, `depth.dpt` and
//! `scores.dpt` (see [`dpt`]), `intrinsics.json` and optionally `gt.json`.

pub mod dpt;
pub mod json;
pub mod model;
pub mod synth;

use std::fs;
use std::path::Path;

pub use dpt::{read_dpt, read_dpt_kind, write_dpt, DptMap, MapKind};
pub use json::{
    read_gt, read_intrinsics, read_json, read_poses, read_report, write_gt, write_intrinsics,
    write_json, write_poses, write_report, write_samples_csv, FrameGt, FramePoses, GtObject,
    PoseRecord, SceneGroundTruth, SceneObject,
};
pub use model::{read_model, read_models_dir, write_model, ModelMeta};
pub use synth::{procedural_models, random_ground_truth, render_labels, synth_scene, NoiseSpec};

use crate::dense::{CameraIntrinsics, DenseMaps};
use crate::error::{Error, Result};

pub const QUAT_FILE: &str = "quat.dpt";
pub const DIRECTION_FILE: &str = "direction.dpt";
pub const DEPTH_FILE: &str = "depth.dpt";
pub const SCORES_FILE: &str = "scores.dpt";
pub const INTRINSICS_FILE: &str = "intrinsics.json";
pub const GT_FILE: &str = "gt.json";

/// Splits `maps` into its four containers: quaternion, direction, depth, scores.
pub fn to_dpt(maps: &DenseMaps) -> Result<[DptMap; 4]> {
    maps.validate_shapes()?;
    let (h, w) = (maps.height as u32, maps.width as u32);
    Ok([
        DptMap::new(MapKind::Quaternion, h, w, 4, maps.quat.clone())?,
        DptMap::new(MapKind::Direction, h, w, 2, maps.direction.clone())?,
        DptMap::new(MapKind::Depth, h, w, 1, maps.depth.clone())?,
        DptMap::new(
            MapKind::Scores,
            h,
            w,
            maps.n_classes as u32 + 1,
            maps.scores.clone(),
        )?,
    ])
}

pub fn write_dense_dir(dir: &Path, maps: &DenseMaps) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let [q, d, z, s] = to_dpt(maps)?;
    write_dpt(&dir.join(QUAT_FILE), &q)?;
    write_dpt(&dir.join(DIRECTION_FILE), &d)?;
    write_dpt(&dir.join(DEPTH_FILE), &z)?;
    write_dpt(&dir.join(SCORES_FILE), &s)
}

/// Reads the four maps of a scene directory and recomputes the labels.
/// With `log_depth` the stored depth is taken as `ln z` and exponentiated.
pub fn read_dense_dir(dir: &Path, log_depth: bool) -> Result<DenseMaps> {
    let q = read_dpt_kind(&dir.join(QUAT_FILE), MapKind::Quaternion)?;
    let d = read_dpt_kind(&dir.join(DIRECTION_FILE), MapKind::Direction)?;
    let z = read_dpt_kind(&dir.join(DEPTH_FILE), MapKind::Depth)?;
    let s = read_dpt_kind(&dir.join(SCORES_FILE), MapKind::Scores)?;
    for (name, m) in [(DIRECTION_FILE, &d), (DEPTH_FILE, &z), (SCORES_FILE, &s)] {
        if (m.height, m.width) != (q.height, q.width) {
            return Err(Error::invalid(format!(
                "{}: {name} is {}x{} but {QUAT_FILE} is {}x{}",
                dir.display(),
                m.height,
                m.width,
                q.height,
                q.width
            )));
        }
    }
    let mut depth = z.data;
    if log_depth {
        depth.iter_mut().for_each(|v| *v = v.exp());
    }
    let n = q.height as usize * q.width as usize;
    let mut maps = DenseMaps {
        height: q.height as usize,
        width: q.width as usize,
        n_classes: s.channels as usize - 1,
        quat: q.data,
        direction: d.data,
        depth,
        scores: s.data,
        labels: vec![0; n],
    };
    maps.recompute_labels();
    Ok(maps)
}

/// Writes maps, intrinsics and ground truth of a synthetic scene.
pub fn write_scene(dir: &Path, gt: &SceneGroundTruth, maps: &DenseMaps) -> Result<()> {
    write_dense_dir(dir, maps)?;
    write_intrinsics(&dir.join(INTRINSICS_FILE), &gt.intrinsics)?;
    write_gt(&dir.join(GT_FILE), &gt.to_frame())
}

/// Intrinsics of a scene directory, falling back to the defaults when the
/// directory has no `intrinsics.json`.
pub fn scene_intrinsics(dir: &Path) -> Result<CameraIntrinsics> {
    let path = dir.join(INTRINSICS_FILE);
    if path.exists() {
        read_intrinsics(&path)
    } else {
        Ok(CameraIntrinsics::default())
    }
}
