//! Synthetic dense maps rendered from ground-truth poses and point models,
//! with controllable noise. Serves as the oracle generator for the pipeline.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::json::{SceneGroundTruth, SceneObject};
use crate::dense::{CameraIntrinsics, DenseMaps, Pixel, PixelSet};
use crate::error::{Error, Result};
use crate::losses::ObjectModel;
use crate::metrics::Pose;
use crate::quat::Quaternion;

pub const CONFIDENCE_MIN: f64 = 0.2;
pub const CONFIDENCE_MAX: f64 = 2.0;
pub const OUTLIER_NORM_MAX: f64 = 0.2;
pub const DEFAULT_WIDTH: usize = 640;
pub const DEFAULT_HEIGHT: usize = 480;
pub const DEFAULT_MODEL_POINTS: usize = 2620;

const GT_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// Perturbations applied on top of the exact rendered maps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Per-component Gaussian added to the raw quaternion.
    pub sigma_quat: f64,
    /// Gaussian rotation of the center direction, radians.
    pub sigma_dir: f64,
    /// Gaussian added to the depth, meters.
    pub sigma_depth: f64,
    /// Probability that a pixel's quaternion is replaced by a low-norm outlier.
    pub outlier_fraction: f64,
    /// Probability that a foreground pixel is relabeled as background.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_quat: 0.05,
            sigma_dir: 0.05,
            sigma_depth: 0.01,
            outlier_fraction: 0.1,
            label_noise: 0.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn zero(seed: u64) -> Self {
        Self {
            sigma_quat: 0.0,
            sigma_dir: 0.0,
            sigma_depth: 0.0,
            outlier_fraction: 0.0,
            label_noise: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_quat", self.sigma_quat),
            ("sigma_dir", self.sigma_dir),
            ("sigma_depth", self.sigma_depth),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("outlier_fraction", self.outlier_fraction),
            ("label_noise", self.label_noise),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "{name} must lie in [0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

fn project(k: &CameraIntrinsics, p: [f64; 3]) -> Option<[f64; 2]> {
    if !(p[2] > 0.0) {
        return None;
    }
    Some([k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy])
}

fn highest_class(
    gt: &SceneGroundTruth,
    models: &BTreeMap<usize, ObjectModel<f64>>,
) -> Result<usize> {
    for o in &gt.objects {
        if !models.contains_key(&o.class_id) {
            return Err(Error::invalid(format!("no model for class {}", o.class_id)));
        }
        if o.class_id == 0 {
            return Err(Error::invalid("class id 0 is reserved for background"));
        }
    }
    Ok(models
        .keys()
        .copied()
        .max()
        .unwrap_or(0)
        .max(gt.objects.iter().map(|o| o.class_id).max().unwrap_or(0)))
}

/// Noise-free label image: each model point is projected and splatted over
/// its 3×3 neighborhood, the nearest surface winning. Objects with no
/// visible pixel are skipped with a warning.
pub fn render_labels(
    gt: &SceneGroundTruth,
    models: &BTreeMap<usize, ObjectModel<f64>>,
    width: usize,
    height: usize,
) -> Result<Vec<u16>> {
    highest_class(gt, models)?;
    gt.intrinsics.validate()?;
    let mut labels = vec![0u16; width * height];
    let mut zbuf = vec![f64::INFINITY; width * height];
    for obj in &gt.objects {
        let model = &models[&obj.class_id];
        let mut drawn = 0usize;
        for &p in &model.points {
            let r = obj.pose.rotation.rotate(p);
            let x = [
                r[0] + obj.pose.translation[0],
                r[1] + obj.pose.translation[1],
                r[2] + obj.pose.translation[2],
            ];
            let Some([u, v]) = project(&gt.intrinsics, x) else {
                continue;
            };
            let (u, v) = (u.round() as i64, v.round() as i64);
            for dv in -1..=1 {
                for du in -1..=1 {
                    let (uu, vv) = (u + du, v + dv);
                    if uu < 0 || vv < 0 || uu >= width as i64 || vv >= height as i64 {
                        continue;
                    }
                    let i = vv as usize * width + uu as usize;
                    if x[2] < zbuf[i] {
                        zbuf[i] = x[2];
                        labels[i] = obj.class_id as u16;
                        drawn += 1;
                    }
                }
            }
        }
        if drawn == 0 {
            log::warn!(
                "frame {:?}: class {} lies entirely outside the image, skipped",
                gt.frame_id,
                obj.class_id
            );
        }
    }
    Ok(labels)
}

/// Pixels of `labels` equal to `class_id`.
pub fn label_mask(labels: &[u16], width: usize, class_id: usize) -> PixelSet {
    PixelSet::from_pixels(
        labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l as usize == class_id)
            .map(|(i, _)| Pixel::new((i % width) as u32, (i / width) as u32))
            .collect(),
    )
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Uniformly distributed unit quaternion, canonical sign.
pub fn random_unit_quaternion(rng: &mut impl Rng) -> Quaternion<f64> {
    loop {
        let q = Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = q.norm();
        if n > 1e-6 {
            return q.scale(1.0 / n).canonical();
        }
    }
}

/// Renders dense maps for `gt`.
///
/// Every foreground pixel gets the true quaternion scaled by a confidence
/// drawn from `[0.2, 2]`, the unit direction toward the projected object
/// center (`(1, 0)` on the center itself), the center depth `t_z` and a
/// one-hot score. Noise is then applied per pixel in row-major order with a
/// fixed draw sequence, so a given seed always reproduces the same maps.
pub fn synth_scene(
    gt: &SceneGroundTruth,
    models: &BTreeMap<usize, ObjectModel<f64>>,
    noise: &NoiseSpec,
    width: usize,
    height: usize,
) -> Result<DenseMaps> {
    noise.validate()?;
    let n_classes = highest_class(gt, models)?;
    let labels = render_labels(gt, models, width, height)?;
    let mut maps = DenseMaps::zeros(height, width, n_classes);
    let objects: BTreeMap<usize, (&SceneObject, [f64; 2])> = gt
        .objects
        .iter()
        .filter_map(|o| project(&gt.intrinsics, o.pose.translation).map(|c| (o.class_id, (o, c))))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    rng.set_stream(NOISE_STREAM);
    for v in 0..height {
        for u in 0..width {
            let class_id = labels[v * width + u] as usize;
            if class_id == 0 {
                continue;
            }
            let Some(&(obj, center)) = objects.get(&class_id) else {
                continue;
            };
            let p = Pixel::new(u as u32, v as u32);

            let confidence = rng.random_range(CONFIDENCE_MIN..=CONFIDENCE_MAX);
            let qn = [
                normal(&mut rng),
                normal(&mut rng),
                normal(&mut rng),
                normal(&mut rng),
            ];
            let dir_noise = normal(&mut rng) * noise.sigma_dir;
            let depth_noise = normal(&mut rng) * noise.sigma_depth;
            let outlier_draw: f64 = rng.random();
            let outlier = random_unit_quaternion(&mut rng);
            let outlier_norm = rng.random_range(0.0..=OUTLIER_NORM_MAX);
            let label_draw: f64 = rng.random();

            let q = if outlier_draw < noise.outlier_fraction {
                outlier.scale(outlier_norm)
            } else {
                let t = obj.pose.rotation.scale(confidence).to_array();
                Quaternion::new(
                    t[0] + noise.sigma_quat * qn[0],
                    t[1] + noise.sigma_quat * qn[1],
                    t[2] + noise.sigma_quat * qn[2],
                    t[3] + noise.sigma_quat * qn[3],
                )
            };
            maps.set_quaternion(p, q.cast());

            let (du, dv) = (center[0] - u as f64, center[1] - v as f64);
            let len = (du * du + dv * dv).sqrt();
            let base = if len > 1e-12 {
                [du / len, dv / len]
            } else {
                [1.0, 0.0]
            };
            let (s, c) = dir_noise.sin_cos();
            let d = [c * base[0] - s * base[1], s * base[0] + c * base[1]];
            maps.set_direction(p, [d[0] as f32, d[1] as f32]);

            let i = maps.index(p);
            maps.depth[i] = (obj.pose.translation[2] + depth_noise) as f32;

            let label = if label_draw < noise.label_noise {
                0
            } else {
                class_id
            };
            maps.set_one_hot(p, label);
        }
    }
    Ok(maps)
}

/// Random ground truth with `n_objects` distinct classes drawn from
/// `models`, placed in horizontally separated slots at 0.7–1.3 m depth.
pub fn random_ground_truth(
    models: &BTreeMap<usize, ObjectModel<f64>>,
    n_objects: usize,
    intrinsics: CameraIntrinsics,
    width: usize,
    height: usize,
    seed: u64,
    frame_id: &str,
) -> Result<SceneGroundTruth> {
    intrinsics.validate()?;
    if n_objects == 0 || n_objects > models.len() {
        return Err(Error::invalid(format!(
            "cannot place {n_objects} objects with {} models",
            models.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(GT_STREAM);
    let mut classes: Vec<usize> = models.keys().copied().collect();
    classes.shuffle(&mut rng);
    classes.truncate(n_objects);
    let slot = width as f64 / n_objects as f64;
    let objects = classes
        .into_iter()
        .enumerate()
        .map(|(i, class_id)| {
            let u = (i as f64 + 0.5) * slot + rng.random_range(-0.1..0.1) * slot;
            let v = height as f64 * (0.5 + rng.random_range(-0.15..0.15));
            let z = rng.random_range(0.7..1.3);
            let rotation = random_unit_quaternion(&mut rng);
            let translation = [
                (u - intrinsics.cx) * z / intrinsics.fx,
                (v - intrinsics.cy) * z / intrinsics.fy,
                z,
            ];
            SceneObject {
                class_id,
                pose: Pose::new(rotation, translation),
            }
        })
        .collect();
    Ok(SceneGroundTruth {
        frame_id: frame_id.to_string(),
        objects,
        intrinsics,
    })
}

fn uniform_on_box(rng: &mut ChaCha8Rng, half: [f64; 3]) -> [f64; 3] {
    let areas = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
    let total: f64 = areas.iter().sum();
    let mut pick = rng.random::<f64>() * total;
    let mut axis = 2;
    for (a, &area) in areas.iter().enumerate() {
        if pick < area {
            axis = a;
            break;
        }
        pick -= area;
    }
    let mut p = [0.0; 3];
    for (k, slot) in p.iter_mut().enumerate() {
        *slot = rng.random_range(-half[k]..half[k]);
    }
    p[axis] = if rng.random::<bool>() {
        half[axis]
    } else {
        -half[axis]
    };
    p
}

fn cylinder_point(rng: &mut ChaCha8Rng, radius: f64, half_height: f64) -> [f64; 3] {
    let side = 2.0 * PI * radius * 2.0 * half_height;
    let cap = PI * radius * radius;
    let pick = rng.random::<f64>() * (side + 2.0 * cap);
    let phi = rng.random_range(0.0..2.0 * PI);
    if pick < side {
        [
            radius * phi.cos(),
            radius * phi.sin(),
            rng.random_range(-half_height..half_height),
        ]
    } else {
        let r = radius * rng.random::<f64>().sqrt();
        let z = if pick < side + cap {
            half_height
        } else {
            -half_height
        };
        [r * phi.cos(), r * phi.sin(), z]
    }
}

/// Three procedural models with `n_points` surface samples each: a box
/// (class 1), a rotationally symmetric cylinder (class 2) and a mug with a
/// handle (class 3).
pub fn procedural_models(n_points: usize, seed: u64) -> Vec<ObjectModel<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boxed = (0..n_points)
        .map(|_| uniform_on_box(&mut rng, [0.05, 0.03, 0.02]))
        .collect();
    let can = (0..n_points)
        .map(|_| cylinder_point(&mut rng, 0.035, 0.05))
        .collect();
    let handle_points = n_points / 5;
    let mug = (0..n_points)
        .map(|i| {
            if i < handle_points {
                // half torus attached to the +x side
                let a = rng.random_range(-PI / 2.0..PI / 2.0);
                let b = rng.random_range(0.0..2.0 * PI);
                let (big, small) = (0.025, 0.006);
                [
                    0.04 + (big + small * b.cos()) * a.cos(),
                    small * b.sin(),
                    (big + small * b.cos()) * a.sin(),
                ]
            } else {
                cylinder_point(&mut rng, 0.04, 0.045)
            }
        })
        .collect();
    vec![
        ObjectModel {
            class_id: 1,
            name: "box".into(),
            symmetric: false,
            points: boxed,
        },
        ObjectModel {
            class_id: 2,
            name: "can".into(),
            symmetric: true,
            points: can,
        },
        ObjectModel {
            class_id: 3,
            name: "mug".into(),
            symmetric: false,
            points: mug,
        },
    ]
}
