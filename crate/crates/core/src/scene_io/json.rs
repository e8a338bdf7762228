//! JSON schemas for intrinsics, ground truth, estimated poses and reports.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dense::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::metrics::{EvalReport, Pose, SampleRecord};
use crate::quat::{Quaternion, DEGENERATE_NORM, UNIT_TOLERANCE};

/// One annotated (or estimated) object in a frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub class_id: usize,
    /// `[w, x, y, z]`.
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameGt {
    pub frame_id: String,
    pub objects: Vec<GtObject>,
}

/// A pose produced by the aggregation pipeline. Shares the ground-truth
/// fields, so a poses file can be read back with [`read_gt`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub class_id: usize,
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
    pub support: f64,
    pub used_count: usize,
    pub ambiguous: bool,
    /// Refined image center `(u, v)`.
    pub center: [f64; 2],
    /// `(u_min, v_min, u_max, v_max)`, inclusive.
    pub bbox: [u32; 4],
    pub inlier_count: usize,
    pub pixel_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePoses {
    pub frame_id: String,
    pub objects: Vec<PoseRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneObject {
    pub class_id: usize,
    pub pose: Pose<f64>,
}

/// Everything a frame's annotation carries, with unit rotations.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGroundTruth {
    pub frame_id: String,
    pub objects: Vec<SceneObject>,
    pub intrinsics: CameraIntrinsics,
}

impl SceneGroundTruth {
    pub fn to_frame(&self) -> FrameGt {
        FrameGt {
            frame_id: self.frame_id.clone(),
            objects: self
                .objects
                .iter()
                .map(|o| GtObject {
                    class_id: o.class_id,
                    quaternion: o.pose.rotation.to_array(),
                    translation: o.pose.translation,
                })
                .collect(),
        }
    }

    /// Validates `frame` and pairs it with `intrinsics`. Quaternions off the
    /// unit sphere are normalized with a warning; unit ones are kept bit for bit.
    pub fn from_frame(frame: &FrameGt, intrinsics: CameraIntrinsics, path: &Path) -> Result<Self> {
        Ok(Self {
            frame_id: frame.frame_id.clone(),
            objects: frame_objects(frame, path)?,
            intrinsics,
        })
    }

    pub fn object(&self, class_id: usize) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.class_id == class_id)
    }
}

/// Converts the objects of `frame` into poses; see [`SceneGroundTruth::from_frame`].
pub fn frame_objects(frame: &FrameGt, path: &Path) -> Result<Vec<SceneObject>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(frame.objects.len());
    for (i, o) in frame.objects.iter().enumerate() {
        let schema = |field: &str, msg: String| Error::Schema {
            path: path.to_path_buf(),
            json_path: format!("objects[{i}].{field}"),
            msg,
        };
        if !seen.insert(o.class_id) {
            return Err(schema(
                "class_id",
                format!(
                    "class {} appears twice in frame {:?}",
                    o.class_id, frame.frame_id
                ),
            ));
        }
        if o.quaternion
            .iter()
            .chain(&o.translation)
            .any(|v| !v.is_finite())
        {
            return Err(schema("quaternion", "non-finite pose value".into()));
        }
        let mut q = Quaternion::from_array(o.quaternion);
        let n = q.norm();
        if n < DEGENERATE_NORM {
            return Err(schema("quaternion", "zero quaternion".into()));
        }
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            log::warn!(
                "{}: objects[{i}].quaternion has norm {n}, normalizing",
                path.display()
            );
            q = q.scale(1.0 / n);
        }
        out.push(SceneObject {
            class_id: o.class_id,
            pose: Pose::new(q, o.translation),
        });
    }
    Ok(out)
}

fn parse_error(path: &Path, e: &serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    }
}

fn schema_error(
    path: &Path,
    prefix: &str,
    e: serde_path_to_error::Error<serde_json::Error>,
) -> Error {
    let inner = e.path().to_string();
    let json_path = match (prefix.is_empty(), inner.as_str()) {
        (true, _) => inner,
        (false, ".") => prefix.to_string(),
        (false, _) => format!("{prefix}.{inner}"),
    };
    Error::Schema {
        path: path.to_path_buf(),
        json_path,
        msg: e.into_inner().to_string(),
    }
}

/// Deserializes `text` with the JSON path of the first schema violation in
/// the error.
pub fn from_json_str<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error(path, &e))?;
    serde_path_to_error::deserialize(value).map_err(|e| schema_error(path, "", e))
}

/// Like [`from_json_str`] but accepts either one value or an array of them.
pub fn from_json_str_many<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<T>> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error(path, &e))?;
    match value {
        serde_json::Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                serde_path_to_error::deserialize(v)
                    .map_err(|e| schema_error(path, &format!("[{i}]"), e))
            })
            .collect(),
        v => Ok(vec![
            serde_path_to_error::deserialize(v).map_err(|e| schema_error(path, "", e))?
        ]),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_json_str(&read_text(path)?, path)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("{}: cannot serialize: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    let k: CameraIntrinsics = read_json(path)?;
    k.validate().map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        json_path: ".".into(),
        msg: e.to_string(),
    })?;
    Ok(k)
}

pub fn write_intrinsics(path: &Path, k: &CameraIntrinsics) -> Result<()> {
    write_json(path, k)
}

/// Reads one frame or an array of frames.
pub fn read_gt(path: &Path) -> Result<Vec<FrameGt>> {
    let frames: Vec<FrameGt> = from_json_str_many(&read_text(path)?, path)?;
    for f in &frames {
        frame_objects(f, path)?;
    }
    Ok(frames)
}

pub fn write_gt(path: &Path, frame: &FrameGt) -> Result<()> {
    write_json(path, frame)
}

pub fn read_poses(path: &Path) -> Result<Vec<FramePoses>> {
    from_json_str_many(&read_text(path)?, path)
}

pub fn write_poses(path: &Path, frames: &[FramePoses]) -> Result<()> {
    write_json(path, frames)
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    write_json(path, report)
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    read_json(path)
}

pub const SAMPLE_CSV_HEADER: [&str; 7] = [
    "frame_id",
    "class_id",
    "add",
    "adds",
    "rot_p",
    "rot_s",
    "trans_err",
];

/// Per-sample CSV with header `frame_id,class_id,add,adds,rot_p,rot_s,trans_err`;
/// misses leave the distance fields empty.
pub fn write_samples_csv(path: &Path, samples: &[SampleRecord]) -> Result<()> {
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(SAMPLE_CSV_HEADER).map_err(csv_err)?;
    for s in samples {
        w.serialize(s).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
