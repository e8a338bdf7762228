//! ADD / ADD-S pose distances, accuracy curves and their area under the
//! curve, rotation-only variants and class-wise summaries.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::PixelSet;
use crate::error::{Error, Result};
use crate::losses::ObjectModel;
use crate::quat::{to_matrix, Quaternion};
use crate::scalar::Real;

/// Upper end of the distance-threshold range of the accuracy curve (meters).
pub const DEFAULT_TAU_MAX: f64 = 0.1;
/// Thresholds sampled for the reported curves.
pub const CURVE_SAMPLES: usize = 101;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<T> {
    pub rotation: Quaternion<T>,
    pub translation: [T; 3],
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Quaternion<T>, translation: [T; 3]) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation_only(&self) -> Self {
        Self {
            rotation: self.rotation,
            translation: [T::zero(); 3],
        }
    }

    fn transformed(&self, model: &ObjectModel<T>) -> Result<Vec<[T; 3]>> {
        let r = to_matrix(self.rotation)?;
        let t = self.translation;
        Ok(model
            .points
            .iter()
            .map(|&x| {
                let y = r.apply(x);
                [y[0] + t[0], y[1] + t[1], y[2] + t[2]]
            })
            .collect())
    }
}

#[inline]
fn dist<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Mean distance between corresponding transformed model points.
pub fn add_distance<T: Real>(est: &Pose<T>, gt: &Pose<T>, model: &ObjectModel<T>) -> Result<T> {
    model.validate()?;
    let a = est.transformed(model)?;
    let b = gt.transformed(model)?;
    let sum: T = a.iter().zip(&b).map(|(x, y)| dist(*x, *y)).sum();
    Ok(sum / T::from_usize_lossy(model.len()))
}

/// Mean distance from each estimated model point to the closest
/// ground-truth model point.
pub fn adds_distance<T: Real>(est: &Pose<T>, gt: &Pose<T>, model: &ObjectModel<T>) -> Result<T> {
    model.validate()?;
    let a = est.transformed(model)?;
    let b = gt.transformed(model)?;
    let mins: Vec<T> = a
        .par_iter()
        .map(|x| {
            b.iter()
                .map(|y| {
                    let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
                    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
                })
                .fold(T::infinity(), |m, d| m.min(d))
                .sqrt()
        })
        .collect();
    let sum: T = mins.into_iter().sum();
    Ok(sum / T::from_usize_lossy(model.len()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceVariant {
    /// Point-wise (ADD).
    P,
    /// Nearest-point (ADD-S).
    S,
}

/// ADD or ADD-S with both translations removed.
pub fn rotation_only_distance<T: Real>(
    est: &Pose<T>,
    gt: &Pose<T>,
    model: &ObjectModel<T>,
    variant: DistanceVariant,
) -> Result<T> {
    let (e, g) = (est.rotation_only(), gt.rotation_only());
    match variant {
        DistanceVariant::P => add_distance(&e, &g, model),
        DistanceVariant::S => adds_distance(&e, &g, model),
    }
}

pub fn translation_error<T: Real>(est: &Pose<T>, gt: &Pose<T>) -> T {
    dist(est.translation, gt.translation)
}

/// Fraction of `distances` strictly below `tau`.
pub fn accuracy<T: Real>(distances: &[T], tau: T) -> T {
    if distances.is_empty() {
        return T::zero();
    }
    let n = distances.iter().filter(|&&d| d < tau).count();
    T::from_usize_lossy(n) / T::from_usize_lossy(distances.len())
}

/// Area under the accuracy-vs-threshold curve on `[0, τ_max]`, in percent.
///
/// The accuracy curve is a step function, so the integral is exactly
/// `Σᵢ max(0, τ_max − dᵢ) / (n τ_max) · 100`. Non-finite distances (missed
/// detections) contribute nothing.
pub fn auc<T: Real>(distances: &[T], tau_max: T) -> Result<T> {
    if !(tau_max > T::zero()) {
        return Err(Error::invalid(format!(
            "tau_max must be positive, got {tau_max}"
        )));
    }
    if distances.is_empty() {
        return Err(Error::invalid("auc of an empty distance list"));
    }
    if distances.iter().any(|d| d.is_nan() || *d < T::zero()) {
        return Err(Error::invalid("distances must be nonnegative"));
    }
    let area: T = distances
        .iter()
        .map(|&d| {
            if d.is_finite() {
                (tau_max - d).max(T::zero())
            } else {
                T::zero()
            }
        })
        .sum();
    Ok(area / (T::from_usize_lossy(distances.len()) * tau_max) * T::lit(100.0))
}

/// Accuracy curve sampled at `samples` equally spaced thresholds in `[0, τ_max]`.
pub fn accuracy_curve(distances: &[f64], tau_max: f64, samples: usize) -> Vec<[f64; 2]> {
    let samples = samples.max(2);
    (0..samples)
        .map(|i| {
            let tau = tau_max * i as f64 / (samples - 1) as f64;
            [tau, accuracy(distances, tau)]
        })
        .collect()
}

/// Intersection over union of two pixel sets; 1 when both are empty.
pub fn mask_iou(a: &PixelSet, b: &PixelSet) -> f64 {
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Distances of one estimate against its ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub frame_id: String,
    pub class_id: usize,
    #[serde(with = "finite_or_null")]
    pub add: f64,
    #[serde(with = "finite_or_null")]
    pub adds: f64,
    #[serde(with = "finite_or_null")]
    pub rot_p: f64,
    #[serde(with = "finite_or_null")]
    pub rot_s: f64,
    #[serde(with = "finite_or_null")]
    pub trans_err: f64,
}

impl SampleRecord {
    /// An object present in the ground truth but not detected.
    pub fn missed(frame_id: &str, class_id: usize) -> Self {
        Self {
            frame_id: frame_id.to_string(),
            class_id,
            add: f64::INFINITY,
            adds: f64::INFINITY,
            rot_p: f64::INFINITY,
            rot_s: f64::INFINITY,
            trans_err: f64::INFINITY,
        }
    }

    pub fn is_missed(&self) -> bool {
        !self.add.is_finite()
    }
}

pub fn evaluate_sample(
    frame_id: &str,
    est: &Pose<f64>,
    gt: &Pose<f64>,
    model: &ObjectModel<f64>,
) -> Result<SampleRecord> {
    Ok(SampleRecord {
        frame_id: frame_id.to_string(),
        class_id: model.class_id,
        add: add_distance(est, gt, model)?,
        adds: adds_distance(est, gt, model)?,
        rot_p: rotation_only_distance(est, gt, model, DistanceVariant::P)?,
        rot_s: rotation_only_distance(est, gt, model, DistanceVariant::S)?,
        trans_err: translation_error(est, gt),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct AucSet {
    pub auc_p: f64,
    pub auc_s: f64,
    pub rot_auc_p: f64,
    pub rot_auc_s: f64,
}

impl AucSet {
    fn from_records(records: &[&SampleRecord], tau_max: f64) -> Result<Self> {
        let col =
            |f: fn(&SampleRecord) -> f64| -> Vec<f64> { records.iter().map(|r| f(r)).collect() };
        Ok(Self {
            auc_p: auc(&col(|r| r.add), tau_max)?,
            auc_s: auc(&col(|r| r.adds), tau_max)?,
            rot_auc_p: auc(&col(|r| r.rot_p), tau_max)?,
            rot_auc_s: auc(&col(|r| r.rot_s), tau_max)?,
        })
    }

    fn mean(sets: &[AucSet]) -> Option<Self> {
        if sets.is_empty() {
            return None;
        }
        let n = sets.len() as f64;
        Some(Self {
            auc_p: sets.iter().map(|s| s.auc_p).sum::<f64>() / n,
            auc_s: sets.iter().map(|s| s.auc_s).sum::<f64>() / n,
            rot_auc_p: sets.iter().map(|s| s.rot_auc_p).sum::<f64>() / n,
            rot_auc_s: sets.iter().map(|s| s.rot_auc_s).sum::<f64>() / n,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class_id: usize,
    pub name: String,
    pub symmetric: bool,
    pub samples: usize,
    pub missed: usize,
    #[serde(flatten)]
    pub auc: AucSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub thresholds: Vec<f64>,
    pub add: Vec<f64>,
    pub adds: Vec<f64>,
    pub rot_p: Vec<f64>,
    pub rot_s: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tau_max: f64,
    pub samples: Vec<SampleRecord>,
    /// AUCs over all samples pooled together.
    pub pooled: AucSet,
    /// Unweighted mean of the per-class AUCs.
    pub classwise: AucSet,
    pub classes: Vec<ClassSummary>,
    /// Mean AUC P over non-symmetric classes.
    pub nonsymc: Option<f64>,
    /// Mean AUC S over symmetric classes.
    pub symc: Option<f64>,
    /// Mean translation error over detected samples.
    pub mean_translation_error: Option<f64>,
    pub curves: Curves,
}

/// Per-class AUCs followed by the means over non-symmetric classes (AUC P)
/// and symmetric classes (AUC S).
pub fn classwise_summary(
    samples: &[SampleRecord],
    models: &BTreeMap<usize, ObjectModel<f64>>,
    tau_max: f64,
) -> Result<(Vec<ClassSummary>, Option<f64>, Option<f64>)> {
    let mut by_class: BTreeMap<usize, Vec<&SampleRecord>> = BTreeMap::new();
    for s in samples {
        by_class.entry(s.class_id).or_default().push(s);
    }
    let mut classes = Vec::new();
    for (class_id, recs) in by_class {
        let model = models
            .get(&class_id)
            .ok_or_else(|| Error::invalid(format!("no model for class {class_id}")))?;
        classes.push(ClassSummary {
            class_id,
            name: model.name.clone(),
            symmetric: model.symmetric,
            samples: recs.len(),
            missed: recs.iter().filter(|r| r.is_missed()).count(),
            auc: AucSet::from_records(&recs, tau_max)?,
        });
    }
    let mean = |v: Vec<f64>| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    let nonsymc = mean(
        classes
            .iter()
            .filter(|c| !c.symmetric)
            .map(|c| c.auc.auc_p)
            .collect(),
    );
    let symc = mean(
        classes
            .iter()
            .filter(|c| c.symmetric)
            .map(|c| c.auc.auc_s)
            .collect(),
    );
    Ok((classes, nonsymc, symc))
}

/// Builds the full report from per-sample records. Records are sorted by
/// frame then class so the result does not depend on evaluation order.
pub fn build_report(
    mut samples: Vec<SampleRecord>,
    models: &BTreeMap<usize, ObjectModel<f64>>,
    tau_max: f64,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    samples.sort_by(|a, b| (&a.frame_id, a.class_id).cmp(&(&b.frame_id, b.class_id)));
    let all: Vec<&SampleRecord> = samples.iter().collect();
    let pooled = AucSet::from_records(&all, tau_max)?;
    let (classes, nonsymc, symc) = classwise_summary(&samples, models, tau_max)?;
    let classwise =
        AucSet::mean(&classes.iter().map(|c| c.auc).collect::<Vec<_>>()).unwrap_or_default();
    let found: Vec<f64> = samples
        .iter()
        .filter(|s| !s.is_missed())
        .map(|s| s.trans_err)
        .collect();
    let mean_translation_error = if found.is_empty() {
        None
    } else {
        Some(found.iter().sum::<f64>() / found.len() as f64)
    };
    let col = |f: fn(&SampleRecord) -> f64| -> Vec<f64> { samples.iter().map(f).collect() };
    let curve = |d: Vec<f64>| -> Vec<f64> {
        accuracy_curve(&d, tau_max, CURVE_SAMPLES)
            .into_iter()
            .map(|p| p[1])
            .collect()
    };
    let curves = Curves {
        thresholds: accuracy_curve(&[], tau_max, CURVE_SAMPLES)
            .into_iter()
            .map(|p| p[0])
            .collect(),
        add: curve(col(|s| s.add)),
        adds: curve(col(|s| s.adds)),
        rot_p: curve(col(|s| s.rot_p)),
        rot_s: curve(col(|s| s.rot_s)),
    };
    Ok(EvalReport {
        tau_max,
        samples,
        pooled,
        classwise,
        classes,
        nonsymc,
        symc,
        mean_translation_error,
        curves,
    })
}

/// Serializes non-finite floats as JSON `null` and reads `null` back as +∞.
pub mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn square(symmetric: bool) -> ObjectModel<f64> {
        ObjectModel {
            class_id: 1,
            name: "square".into(),
            symmetric,
            points: vec![
                [0.05, 0.05, 0.0],
                [-0.05, 0.05, 0.0],
                [-0.05, -0.05, 0.0],
                [0.05, -0.05, 0.0],
            ],
        }
    }

    #[test]
    fn add_examples() {
        let m = square(false);
        let gt = Pose::new(
            Quaternion::from_axis_angle([1.0, 0.0, 0.0], 0.3),
            [0.0, 0.0, 1.0],
        );
        assert_eq!(add_distance(&gt, &gt, &m).unwrap(), 0.0);
        let est = Pose::new(gt.rotation, [0.05, 0.0, 1.0]);
        assert!((add_distance(&est, &gt, &m).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn adds_symmetry_equivalent_is_zero() {
        let m = square(true);
        let gt = Pose::new(Quaternion::identity(), [0.1, 0.0, 0.8]);
        assert_eq!(adds_distance(&gt, &gt, &m).unwrap(), 0.0);
        let est = Pose::new(
            Quaternion::from_axis_angle([0.0, 0.0, 1.0], FRAC_PI_2),
            gt.translation,
        );
        assert!(adds_distance(&est, &gt, &m).unwrap() < 1e-15);
        assert!(add_distance(&est, &gt, &m).unwrap() > 0.05);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.0, 0.0, 0.0], 0.1).unwrap(), 100.0);
        assert_eq!(auc(&[0.1, 0.2, f64::INFINITY], 0.1).unwrap(), 0.0);
        assert_eq!(auc(&[0.05], 0.1).unwrap(), 50.0);
        assert!(auc::<f64>(&[], 0.1).is_err());
        assert!(auc(&[0.01], 0.0).is_err());
    }

    #[test]
    fn rotation_only_ignores_translation() {
        let m = square(false);
        let q = Quaternion::from_axis_angle([0.3, 0.2, 1.0], 1.2);
        let a = Pose::new(q, [5.0, -3.0, 10.0]);
        let b = Pose::new(q, [0.0, 0.0, 0.5]);
        assert_eq!(
            rotation_only_distance(&a, &b, &m, DistanceVariant::P).unwrap(),
            0.0
        );
        assert_eq!(
            rotation_only_distance(&a, &b, &m, DistanceVariant::S).unwrap(),
            0.0
        );
    }

    #[test]
    fn translation_error_345() {
        let q = Quaternion::<f64>::identity();
        let a = Pose::new(q, [0.03, 0.04, 1.0]);
        let b = Pose::new(q, [0.0, 0.0, 1.0]);
        assert!((translation_error(&a, &b) - 0.05).abs() < 1e-15);
        assert_eq!(translation_error(&a, &a), 0.0);
    }

    #[test]
    fn classwise_single_member_means() {
        let mut models = BTreeMap::new();
        let mut sym = square(true);
        sym.class_id = 2;
        models.insert(1, square(false));
        models.insert(2, sym);
        // class 1: ADD 0.02 → AUC P 80; class 2: ADD-S 0.04 → AUC S 60
        let rec = |class_id, add, adds| SampleRecord {
            frame_id: "f".into(),
            class_id,
            add,
            adds,
            rot_p: add,
            rot_s: adds,
            trans_err: 0.0,
        };
        let samples = vec![rec(1, 0.02, 0.01), rec(2, 0.09, 0.04)];
        let (classes, nonsymc, symc) = classwise_summary(&samples, &models, 0.1).unwrap();
        assert_eq!(classes.len(), 2);
        assert!((nonsymc.unwrap() - 80.0).abs() < 1e-12);
        assert!((symc.unwrap() - 60.0).abs() < 1e-12);
    }

    #[test]
    fn missed_detection_serializes_as_null() {
        let r = SampleRecord::missed("f", 3);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"add\":null"));
        let back: SampleRecord = serde_json::from_str(&s).unwrap();
        assert!(back.is_missed());
    }

    #[test]
    fn iou_of_sets() {
        use crate::dense::Pixel;
        let a = PixelSet::from_pixels((0..10).map(|u| Pixel::new(u, 0)).collect());
        let b = PixelSet::from_pixels((5..15).map(|u| Pixel::new(u, 0)).collect());
        assert!((mask_iou(&a, &b) - 5.0 / 15.0).abs() < 1e-15);
        assert_eq!(mask_iou(&PixelSet::default(), &PixelSet::default()), 1.0);
    }
}
