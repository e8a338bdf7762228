//! Orientation losses for dense quaternion training pipelines: point-matching
//! (PLoss), symmetric nearest-point matching (SLoss), their symmetry-aware
//! dispatch (SMLoss), the log quaternion loss (Qloss), the pixel-wise L2 loss
//! and the weighted combination of task losses.
//!
//! Analytic gradients are provided for PLoss and Qloss.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::{to_matrix, Quaternion, RotationMatrix, UNIT_TOLERANCE};
use crate::scalar::Real;

/// Default stabilizer of [`qloss`].
pub const DEFAULT_QLOSS_EPSILON: f64 = 1e-4;

/// Metric depth is multiplied by this factor during training so its error
/// has a range comparable to the center-direction error. Recorded for
/// completeness; nothing here trains.
pub const TRAINING_DEPTH_SCALE: f64 = 100.0;

/// Rigid object point model in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectModel<T> {
    pub class_id: usize,
    pub name: String,
    pub symmetric: bool,
    pub points: Vec<[T; 3]>,
}

impl<T: Real> ObjectModel<T> {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::invalid(format!(
                "model `{}` has no points",
                self.name
            )));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "model `{}` has non-finite points",
                self.name
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Scatter matrix `Σ x xᵀ`.
    pub fn scatter(&self) -> [[T; 3]; 3] {
        let mut s = [[T::zero(); 3]; 3];
        for x in &self.points {
            for i in 0..3 {
                for j in 0..3 {
                    s[i][j] += x[i] * x[j];
                }
            }
        }
        s
    }

    pub fn cast<U: Real>(&self) -> ObjectModel<U> {
        ObjectModel {
            class_id: self.class_id,
            name: self.name.clone(),
            symmetric: self.symmetric,
            points: self
                .points
                .iter()
                .map(|p| p.map(|v| U::lit(v.to_f64_lossy())))
                .collect(),
        }
    }
}

fn unit_matrix<T: Real>(q: Quaternion<T>, what: &str) -> Result<RotationMatrix<T>> {
    to_matrix(q).map_err(|_| {
        Error::invalid(format!(
            "{what} must be a unit quaternion (|‖q‖−1| < {UNIT_TOLERANCE}), got norm {}",
            q.norm()
        ))
    })
}

#[inline]
fn dist_sq<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// `(1/2m) Σₓ ‖R(q̃)x − R(q)x‖²`.
pub fn ploss<T: Real>(
    estimate: Quaternion<T>,
    target: Quaternion<T>,
    model: &ObjectModel<T>,
) -> Result<T> {
    model.validate()?;
    let a = unit_matrix(estimate, "estimate")?;
    let b = unit_matrix(target, "target")?;
    let sum: T = model
        .points
        .iter()
        .map(|&x| dist_sq(a.apply(x), b.apply(x)))
        .sum();
    Ok(sum / (T::lit(2.0) * T::from_usize_lossy(model.len())))
}

/// `(1/2m) Σ_{x₁} min_{x₂} ‖R(q̃)x₁ − R(q)x₂‖²`, brute force over all pairs.
pub fn sloss<T: Real>(
    estimate: Quaternion<T>,
    target: Quaternion<T>,
    model: &ObjectModel<T>,
) -> Result<T> {
    model.validate()?;
    let a = unit_matrix(estimate, "estimate")?;
    let b = unit_matrix(target, "target")?;
    let est: Vec<[T; 3]> = model.points.iter().map(|&x| a.apply(x)).collect();
    let tgt: Vec<[T; 3]> = model.points.iter().map(|&x| b.apply(x)).collect();
    let mins: Vec<T> = est
        .par_iter()
        .map(|&e| {
            tgt.iter()
                .map(|&t| dist_sq(e, t))
                .fold(T::infinity(), |m, d| m.min(d))
        })
        .collect();
    let sum: T = mins.into_iter().sum();
    Ok(sum / (T::lit(2.0) * T::from_usize_lossy(model.len())))
}

/// SLoss for symmetric models, PLoss otherwise.
pub fn smloss<T: Real>(
    estimate: Quaternion<T>,
    target: Quaternion<T>,
    model: &ObjectModel<T>,
) -> Result<T> {
    if model.symmetric {
        sloss(estimate, target, model)
    } else {
        ploss(estimate, target, model)
    }
}

/// `log(ε + 1 − |q̄·q|)` for unit `q̄`, `q`.
///
/// `1 − |q̄·q|` is evaluated as `½‖q̄ − s·q‖²` with `s = sign(q̄·q)`, which is
/// the same quantity on the unit sphere but exactly zero for `q̄ = ±q`.
pub fn qloss<T: Real>(estimate: Quaternion<T>, target: Quaternion<T>, epsilon: T) -> Result<T> {
    if !(epsilon > T::zero()) {
        return Err(Error::invalid(format!(
            "qloss epsilon must be positive, got {epsilon}"
        )));
    }
    for (what, q) in [("estimate", estimate), ("target", target)] {
        if !q.is_unit(T::lit(UNIT_TOLERANCE)) {
            return Err(Error::invalid(format!(
                "{what} must be a unit quaternion (|‖q‖−1| < {UNIT_TOLERANCE}), got norm {}",
                q.norm()
            )));
        }
    }
    let aligned = if estimate.dot(&target) < T::zero() {
        -target
    } else {
        target
    };
    let gap = estimate.sub(&aligned).norm_squared() / T::lit(2.0);
    Ok((epsilon + gap).ln())
}

/// Mean over labeled pixels of `‖q_p − s·q_gt‖²`, where `s = ±1` aligns the
/// ground truth of the pixel's class with the prediction. Label 0 is
/// background and ignored.
pub fn l2_pixel_loss<T: Real>(
    predictions: &[Quaternion<T>],
    labels: &[usize],
    ground_truth: &BTreeMap<usize, Quaternion<T>>,
) -> Result<T> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut sum = T::zero();
    let mut n = 0usize;
    for (q, &label) in predictions.iter().zip(labels) {
        if label == 0 {
            continue;
        }
        let gt = ground_truth
            .get(&label)
            .ok_or_else(|| Error::invalid(format!("no ground truth for class {label}")))?;
        let gt = if q.dot(gt) < T::zero() { -*gt } else { *gt };
        sum += q.sub(&gt).norm_squared();
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("ground-truth mask is empty"));
    }
    Ok(sum / T::from_usize_lossy(n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinedLossWeights<T> {
    pub seg: T,
    pub trans: T,
    pub rot: T,
}

impl<T: Real> Default for CombinedLossWeights<T> {
    /// Weights used with the pixel-wise L2 and Qloss orientation losses.
    fn default() -> Self {
        Self {
            seg: T::one(),
            trans: T::one(),
            rot: T::one(),
        }
    }
}

impl<T: Real> CombinedLossWeights<T> {
    /// Weights used with SMLoss as the orientation loss.
    pub fn shape_match() -> Self {
        Self {
            rot: T::lit(100.0),
            ..Self::default()
        }
    }
}

/// `α_seg L_seg + α_trans L_trans + α_rot L_rot`.
pub fn combined_loss<T: Real>(seg: T, trans: T, rot: T, w: &CombinedLossWeights<T>) -> Result<T> {
    if [w.seg, w.trans, w.rot].iter().any(|a| !(*a >= T::zero())) {
        return Err(Error::invalid("loss weights must be nonnegative"));
    }
    Ok(w.seg * seg + w.trans * trans + w.rot * rot)
}

/// `∂R/∂qₖ` for the quaternion-to-matrix map, evaluated at `q`.
fn rotation_jacobian<T: Real>(q: Quaternion<T>) -> [[[T; 3]; 3]; 4] {
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let z0 = T::zero();
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    [
        [
            [z0, -two * z, two * y],
            [two * z, z0, -two * x],
            [-two * y, two * x, z0],
        ],
        [
            [z0, two * y, two * z],
            [two * y, -four * x, -two * w],
            [two * z, two * w, -four * x],
        ],
        [
            [-four * y, two * x, two * w],
            [two * x, z0, two * z],
            [-two * w, two * z, -four * y],
        ],
        [
            [-four * z, -two * w, two * x],
            [two * w, -four * z, two * y],
            [two * x, two * y, z0],
        ],
    ]
}

/// Gradient of `ploss(q̃/‖q̃‖, q)` with respect to the raw estimate `q̃`.
///
/// The result is tangent to the sphere at `q̃` and scaled by `1/‖q̃‖`.
pub fn grad_ploss<T: Real>(
    raw_estimate: Quaternion<T>,
    target: Quaternion<T>,
    model: &ObjectModel<T>,
) -> Result<[T; 4]> {
    model.validate()?;
    let n = raw_estimate.norm();
    if !(n > T::lit(crate::quat::DEGENERATE_NORM)) {
        return Err(Error::invalid("gradient undefined at a zero quaternion"));
    }
    let u = raw_estimate.scale(T::one() / n);
    let a = unit_matrix(u, "estimate")?;
    let b = unit_matrix(target, "target")?;
    let s = model.scatter();
    let inv_m = T::one() / T::from_usize_lossy(model.len());

    // ∂L/∂A = (A − B) S / m
    let mut g = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = T::zero();
            for k in 0..3 {
                acc += (a.m[i][k] - b.m[i][k]) * s[k][j];
            }
            g[i][j] = acc * inv_m;
        }
    }
    let jac = rotation_jacobian(u);
    let mut grad_u = [T::zero(); 4];
    for (k, dk) in jac.iter().enumerate() {
        let mut acc = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                acc += g[i][j] * dk[i][j];
            }
        }
        grad_u[k] = acc;
    }
    let ua = u.to_array();
    let radial: T = (0..4).map(|k| grad_u[k] * ua[k]).sum();
    let mut out = [T::zero(); 4];
    for k in 0..4 {
        out[k] = (grad_u[k] - radial * ua[k]) / n;
    }
    Ok(out)
}

/// Euclidean gradient of `log(ε + 1 − |q̄·q|)` with respect to `q̄`, treating
/// `q̄` as a free 4-vector: `−sign(q̄·q) q / (ε + 1 − |q̄·q|)` with
/// `sign(0) = +1`. Its tangent part at a unit `q̄` is the gradient of [`qloss`].
pub fn grad_qloss<T: Real>(
    estimate: Quaternion<T>,
    target: Quaternion<T>,
    epsilon: T,
) -> Result<[T; 4]> {
    if !(epsilon > T::zero()) {
        return Err(Error::invalid(format!(
            "qloss epsilon must be positive, got {epsilon}"
        )));
    }
    let d = estimate.dot(&target);
    let sign = if d < T::zero() { -T::one() } else { T::one() };
    let scale = -sign / (epsilon + T::one() - d.abs());
    Ok(target.scale(scale).to_array())
}

/// Projects a gradient onto the tangent space of the unit sphere at `q`.
pub fn tangent_projection<T: Real>(grad: [T; 4], q: Quaternion<T>) -> [T; 4] {
    let u = q.to_array();
    let nn = q.norm_squared();
    let r: T = (0..4).map(|k| grad[k] * u[k]).sum::<T>() / nn;
    let mut out = grad;
    for k in 0..4 {
        out[k] -= r * u[k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn rz(a: f64) -> Quaternion<f64> {
        Quaternion::from_axis_angle([0.0, 0.0, 1.0], a)
    }

    fn model(points: Vec<[f64; 3]>, symmetric: bool) -> ObjectModel<f64> {
        ObjectModel {
            class_id: 1,
            name: "test".into(),
            symmetric,
            points,
        }
    }

    fn square() -> ObjectModel<f64> {
        model(
            vec![
                [1.0, 1.0, 0.0],
                [-1.0, 1.0, 0.0],
                [-1.0, -1.0, 0.0],
                [1.0, -1.0, 0.0],
            ],
            true,
        )
    }

    #[test]
    fn ploss_examples() {
        let m = model(vec![[1.0, 0.0, 0.0]], false);
        let q = rz(0.4);
        assert_eq!(ploss(q, q, &m).unwrap(), 0.0);
        let v = ploss(rz(PI), Quaternion::identity(), &m).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn sloss_square_examples() {
        let sq = square();
        assert_eq!(sloss(rz(0.3), rz(0.3), &sq).unwrap(), 0.0);
        let v = sloss(rz(FRAC_PI_2), Quaternion::identity(), &sq).unwrap();
        assert!(v.abs() < 1e-12);

        // 45°: each rotated corner (±√2, 0) or (0, ±√2) is nearest to two
        // corners at squared distance (√2 − 1)² + 1 = 4 − 2√2
        let table_min: f64 = {
            let a = to_matrix(rz(FRAC_PI_4)).unwrap();
            sq.points
                .iter()
                .map(|x| {
                    let e = a.apply(*x);
                    sq.points
                        .iter()
                        .map(|y| dist_sq(e, *y))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
                / 8.0
        };
        let hand = 4.0 * (4.0 - 2.0 * 2f64.sqrt()) / 8.0;
        assert!((table_min - hand).abs() < 1e-12);
        let v = sloss(rz(FRAC_PI_4), Quaternion::identity(), &sq).unwrap();
        assert!((v - hand).abs() < 1e-12);
    }

    #[test]
    fn smloss_dispatch() {
        let mut sq = square();
        let (e, t) = (rz(1.2), Quaternion::identity());
        let s = sloss(e, t, &sq).unwrap();
        let p = ploss(e, t, &sq).unwrap();
        assert_eq!(smloss(e, t, &sq).unwrap(), s);
        sq.symmetric = false;
        assert_eq!(smloss(e, t, &sq).unwrap(), p);
        assert!(p - s > 0.0);
    }

    #[test]
    fn qloss_examples() {
        let q = rz(1.1);
        let v = qloss(q, q, 1e-4).unwrap();
        assert!((v - 1e-4f64.ln()).abs() < 1e-12);
        assert_eq!(qloss(-q, q, 1e-4).unwrap(), v);
        let orth = Quaternion::new(0.0, 1.0, 0.0, 0.0);
        let v = qloss(orth, Quaternion::identity(), 1e-4).unwrap();
        assert!((v - 1.0001f64.ln()).abs() < 1e-15);
        assert!((v - 9.9995e-5).abs() < 1e-9);
        assert!(qloss(q, q, 0.0).is_err());
    }

    #[test]
    fn losses_reject_bad_inputs() {
        let empty = model(vec![], false);
        assert!(ploss(rz(0.1), rz(0.2), &empty).is_err());
        assert!(sloss(rz(0.1), rz(0.2), &empty).is_err());
        let m = model(vec![[1.0, 0.0, 0.0]], false);
        assert!(ploss(Quaternion::new(2.0, 0.0, 0.0, 0.0), rz(0.2), &m).is_err());
    }

    #[test]
    fn l2_examples() {
        let gt = rz(0.8);
        let mut map = BTreeMap::new();
        map.insert(1usize, gt);
        let labels = vec![0, 1, 1, 1];
        let preds = vec![Quaternion::identity(), gt, gt, gt];
        assert_eq!(l2_pixel_loss(&preds, &labels, &map).unwrap(), 0.0);
        let preds = vec![Quaternion::identity(), -gt, -gt, gt];
        assert_eq!(l2_pixel_loss(&preds, &labels, &map).unwrap(), 0.0);
        assert!(l2_pixel_loss(&preds, &[0, 0, 0, 0], &map).is_err());
        assert!(l2_pixel_loss(&preds, &[0, 2, 0, 0], &map).is_err());
    }

    #[test]
    fn combined_examples() {
        let w = CombinedLossWeights::<f64>::shape_match();
        assert_eq!(combined_loss(1.0, 1.0, 1.0, &w).unwrap(), 102.0);
        assert_eq!(combined_loss(0.0, 0.0, 0.0, &w).unwrap(), 0.0);
        let w = CombinedLossWeights::<f64>::default();
        assert_eq!(combined_loss(2.0, 3.0, 5.0, &w).unwrap(), 10.0);
    }

    #[test]
    fn grad_ploss_vanishes_at_minimum() {
        let m = model(
            vec![[0.1, 0.2, -0.3], [0.5, -0.1, 0.2], [-0.2, 0.4, 0.1]],
            false,
        );
        let q = Quaternion::from_axis_angle([1.0, -2.0, 0.5], 0.9);
        let g = grad_ploss(q, q, &m).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-8), "{g:?}");
    }

    #[test]
    fn grad_qloss_at_orthogonal_pair() {
        let eps = 1e-4;
        let t = Quaternion::identity();
        let e = Quaternion::new(0.0, 0.0, 1.0, 0.0);
        let g = grad_qloss(e, t, eps).unwrap();
        let mag = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((mag - 1.0 / (1.0 + eps)).abs() < 1e-12);
        // parallel to q
        assert!(g[1].abs() + g[2].abs() + g[3].abs() == 0.0);
        // |·| has a kink at 0; compare with the one-sided difference on the
        // side selected by sign(0) = +1
        let h = 1e-7;
        let f0 = qloss(e, t, eps).unwrap();
        let fh = qloss(e.add(&t.scale(h)), t, eps).unwrap();
        assert!(((fh - f0) / h - g[0]).abs() < 1e-5);
    }
}
