//! Hough voting for object centers from dense center-direction maps, and
//! recovery of metric translation from center and depth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{CameraIntrinsics, DenseMaps, Pixel, PixelSet};
use crate::error::{Error, Result};

pub const DEFAULT_THETA_IN: f64 = 0.3;
pub const DEFAULT_MIN_PIXELS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DepthMode {
    #[default]
    Mean,
    Median,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoughConfig {
    /// Angular tolerance (radians) between a pixel's direction and the
    /// direction to the center for the pixel to count as an inlier.
    pub theta_in: f64,
    pub min_pixels: usize,
    pub depth_mode: DepthMode,
}

impl Default for HoughConfig {
    fn default() -> Self {
        Self {
            theta_in: DEFAULT_THETA_IN,
            min_pixels: DEFAULT_MIN_PIXELS,
            depth_mode: DepthMode::Mean,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HoughVote {
    pub width: usize,
    pub height: usize,
    /// Votes per cell, row-major.
    pub accumulator: Vec<u32>,
    pub peak: Pixel,
    /// Sub-pixel center `(u, v)` from the 3×3 vote centroid around the peak.
    pub center: [f64; 2],
    pub vote_score: f64,
}

impl HoughVote {
    pub fn votes(&self, u: usize, v: usize) -> u32 {
        self.accumulator[v * self.width + u]
    }

    pub fn total_votes(&self) -> u64 {
        self.accumulator.iter().map(|&v| v as u64).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectDetection {
    pub class_id: usize,
    /// Refined sub-pixel center `(u, v)`.
    pub center: [f64; 2],
    pub vote_center: [f64; 2],
    pub depth: f64,
    pub translation: [f64; 3],
    pub inliers: PixelSet,
    /// `(u_min, v_min, u_max, v_max)`, inclusive.
    pub bbox: [u32; 4],
    pub vote_score: f64,
    pub class_pixel_count: usize,
}

/// Cells visited by the ray from `p` along `dir`, stepping one pixel along
/// the dominant axis until the ray leaves the `width × height` grid.
pub fn ray_cells(
    p: Pixel,
    dir: [f64; 2],
    width: usize,
    height: usize,
    mut visit: impl FnMut(usize, usize),
) {
    let (u0, v0) = (p.u as f64, p.v as f64);
    let major = dir[0].abs().max(dir[1].abs());
    if !(major > 1e-12) || !major.is_finite() {
        visit(p.u as usize, p.v as usize);
        return;
    }
    let (su, sv) = (dir[0] / major, dir[1] / major);
    let mut k = 0f64;
    loop {
        let u = (u0 + k * su).round_ties_even();
        let v = (v0 + k * sv).round_ties_even();
        if u < 0.0 || v < 0.0 || u >= width as f64 || v >= height as f64 {
            break;
        }
        visit(u as usize, v as usize);
        k += 1.0;
    }
}

/// Accumulates one vote per pixel of `class_id` into every cell along its
/// predicted center direction and locates the peak.
///
/// Returns `None` when no pixel carries the class.
pub fn hough_vote(dense: &DenseMaps, class_id: usize) -> Option<HoughVote> {
    let pixels = dense.class_pixels(class_id);
    hough_vote_pixels(dense, &pixels)
}

pub fn hough_vote_pixels(dense: &DenseMaps, pixels: &PixelSet) -> Option<HoughVote> {
    if pixels.is_empty() {
        return None;
    }
    let (w, h) = (dense.width, dense.height);
    let mut acc = vec![0u32; w * h];
    for &p in pixels.iter() {
        let d = dense.direction_at(p);
        ray_cells(p, [d[0] as f64, d[1] as f64], w, h, |u, v| {
            acc[v * w + u] += 1
        });
    }
    // first maximum in row-major order = smallest (v, u)
    let mut best = 0usize;
    for (i, &c) in acc.iter().enumerate() {
        if c > acc[best] {
            best = i;
        }
    }
    let peak = Pixel::new((best % w) as u32, (best / w) as u32);
    let (mut su, mut sv, mut sw) = (0.0, 0.0, 0.0);
    for dv in -1i64..=1 {
        for du in -1i64..=1 {
            let (u, v) = (peak.u as i64 + du, peak.v as i64 + dv);
            if dense.in_bounds(u, v) {
                let c = acc[v as usize * w + u as usize] as f64;
                su += c * u as f64;
                sv += c * v as f64;
                sw += c;
            }
        }
    }
    Some(HoughVote {
        width: w,
        height: h,
        peak,
        center: [su / sw, sv / sw],
        vote_score: acc[best] as f64,
        accumulator: acc,
    })
}

/// Whether pixel `p` with direction `dir` points at `center` within `theta_in`.
pub fn is_inlier(p: Pixel, dir: [f64; 2], center: [f64; 2], theta_in: f64) -> bool {
    let to = [center[0] - p.u as f64, center[1] - p.v as f64];
    let dist = (to[0] * to[0] + to[1] * to[1]).sqrt();
    if dist < 0.5 {
        return true;
    }
    let cross = dir[0] * to[1] - dir[1] * to[0];
    let dot = dir[0] * to[0] + dir[1] * to[1];
    cross.abs().atan2(dot) < theta_in
}

/// Pixels of `class_id` whose direction points at `center` within `theta_in`.
pub fn compute_inliers(
    dense: &DenseMaps,
    class_id: usize,
    center: [f64; 2],
    theta_in: f64,
) -> PixelSet {
    let pixels: Vec<Pixel> = dense
        .class_pixels(class_id)
        .iter()
        .copied()
        .filter(|&p| {
            let d = dense.direction_at(p);
            is_inlier(p, [d[0] as f64, d[1] as f64], center, theta_in)
        })
        .collect();
    PixelSet::from_pixels(pixels)
}

/// Back-projects an image point at `depth` meters into camera coordinates.
pub fn recover_translation(center: [f64; 2], depth: f64, k: &CameraIntrinsics) -> Result<[f64; 3]> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::invalid(format!(
            "depth must be positive, got {depth}"
        )));
    }
    Ok([
        depth * (center[0] - k.cx) / k.fx,
        depth * (center[1] - k.cy) / k.fy,
        depth,
    ])
}

/// Pinhole projection of a camera-frame point to `(u, v)`.
pub fn project(t: [f64; 3], k: &CameraIntrinsics) -> [f64; 2] {
    [k.fx * t[0] / t[2] + k.cx, k.fy * t[1] / t[2] + k.cy]
}

/// Least-squares intersection of the rays through `pixels`.
///
/// Minimizes the summed squared perpendicular distance from the center to
/// each ray's supporting line. Returns `None` when the normal matrix is
/// near-singular (all rays parallel).
pub fn ray_intersection(dense: &DenseMaps, pixels: &PixelSet) -> Option<[f64; 2]> {
    let (mut a00, mut a01, mut a11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut n = 0usize;
    for &p in pixels.iter() {
        let d = dense.direction_at(p);
        let (dx, dy) = (d[0] as f64, d[1] as f64);
        let len = (dx * dx + dy * dy).sqrt();
        if !(len > 1e-12) {
            continue;
        }
        let (dx, dy) = (dx / len, dy / len);
        // projector onto the line normal: I - d dᵀ
        let (p00, p01, p11) = (1.0 - dx * dx, -dx * dy, 1.0 - dy * dy);
        let (pu, pv) = (p.u as f64, p.v as f64);
        a00 += p00;
        a01 += p01;
        a11 += p11;
        b0 += p00 * pu + p01 * pv;
        b1 += p01 * pu + p11 * pv;
        n += 1;
    }
    let det = a00 * a11 - a01 * a01;
    if n < 2 || !(det > 1e-6 * (n as f64) * (n as f64)) {
        return None;
    }
    Some([(a11 * b0 - a01 * b1) / det, (a00 * b1 - a01 * b0) / det])
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Detects the single instance of `class_id` (if it has enough pixels).
pub fn detect_class(
    dense: &DenseMaps,
    k: &CameraIntrinsics,
    class_id: usize,
    cfg: &HoughConfig,
) -> Option<ObjectDetection> {
    let pixels = dense.class_pixels(class_id);
    if pixels.len() < cfg.min_pixels.max(1) {
        return None;
    }
    let vote = hough_vote_pixels(dense, &pixels)?;
    let mut inliers = compute_inliers(dense, class_id, vote.center, cfg.theta_in);
    if inliers.is_empty() {
        return None;
    }
    let center = ray_intersection(dense, &inliers)
        .filter(|c| c[0].is_finite() && c[1].is_finite())
        .unwrap_or(vote.center);
    let refined = compute_inliers(dense, class_id, center, cfg.theta_in);
    if !refined.is_empty() {
        inliers = refined;
    }

    let mut depths: Vec<f64> = inliers
        .iter()
        .map(|&p| dense.depth_at(p) as f64)
        .filter(|d| *d > 0.0 && d.is_finite())
        .collect();
    if depths.is_empty() {
        log::warn!("class {class_id}: no inlier with positive depth");
        return None;
    }
    let depth = match cfg.depth_mode {
        DepthMode::Mean => depths.iter().sum::<f64>() / depths.len() as f64,
        DepthMode::Median => median(&mut depths),
    };
    let translation = recover_translation(center, depth, k).ok()?;
    let mut bbox = [u32::MAX, u32::MAX, 0, 0];
    for p in inliers.iter() {
        bbox[0] = bbox[0].min(p.u);
        bbox[1] = bbox[1].min(p.v);
        bbox[2] = bbox[2].max(p.u);
        bbox[3] = bbox[3].max(p.v);
    }
    Some(ObjectDetection {
        class_id,
        center,
        vote_center: vote.center,
        depth,
        translation,
        inliers,
        bbox,
        vote_score: vote.vote_score,
        class_pixel_count: pixels.len(),
    })
}

/// Runs voting, inlier selection, depth aggregation and back-projection for
/// every foreground class with at least `cfg.min_pixels` pixels. Results are
/// ordered by class id.
pub fn detect_objects(
    dense: &DenseMaps,
    k: &CameraIntrinsics,
    cfg: &HoughConfig,
) -> Vec<ObjectDetection> {
    let hist = dense.label_histogram();
    let classes: Vec<usize> = (1..hist.len())
        .filter(|&c| hist[c] >= cfg.min_pixels.max(1))
        .collect();
    classes
        .par_iter()
        .filter_map(|&c| detect_class(dense, k, c, cfg))
        .collect()
}
