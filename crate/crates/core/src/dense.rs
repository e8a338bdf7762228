//! Per-pixel prediction maps and pixel sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::Quaternion;

/// Pixel coordinate: `u` is the column, `v` the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub v: u32,
    pub u: u32,
}

impl Pixel {
    pub fn new(u: u32, v: u32) -> Self {
        Self { v, u }
    }
}

/// Set of pixels kept in row-major order without duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PixelSet(Vec<Pixel>);

impl PixelSet {
    pub fn from_pixels(mut pixels: Vec<Pixel>) -> Self {
        pixels.sort_unstable();
        pixels.dedup();
        Self(pixels)
    }

    pub fn pixels(&self) -> &[Pixel] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, p: Pixel) -> bool {
        self.0.binary_search(&p).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Pixel> {
        self.0.iter()
    }

    pub fn intersection_len(&self, other: &PixelSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::invalid(format!(
                "intrinsics need finite values and positive focal lengths, got {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            fx: 500.0,
            fy: 500.0,
            cx: 319.5,
            cy: 239.5,
        }
    }
}

/// Dense network outputs for one frame, stored channel-last in row-major
/// order as 32-bit floats.
///
/// `scores` has `n_classes + 1` channels, channel 0 being background.
/// `labels` is the per-pixel argmax of `scores` (lowest class on ties).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMaps {
    pub height: usize,
    pub width: usize,
    pub n_classes: usize,
    pub quat: Vec<f32>,
    pub direction: Vec<f32>,
    pub depth: Vec<f32>,
    pub scores: Vec<f32>,
    pub labels: Vec<u16>,
}

impl DenseMaps {
    /// All-background maps.
    pub fn zeros(height: usize, width: usize, n_classes: usize) -> Self {
        let n = height * width;
        let mut scores = vec![0.0; n * (n_classes + 1)];
        for px in 0..n {
            scores[px * (n_classes + 1)] = 1.0;
        }
        Self {
            height,
            width,
            n_classes,
            quat: vec![0.0; n * 4],
            direction: vec![0.0; n * 2],
            depth: vec![0.0; n],
            scores,
            labels: vec![0; n],
        }
    }

    #[inline]
    pub fn index(&self, p: Pixel) -> usize {
        p.v as usize * self.width + p.u as usize
    }

    pub fn in_bounds(&self, u: i64, v: i64) -> bool {
        u >= 0 && v >= 0 && (u as usize) < self.width && (v as usize) < self.height
    }

    pub fn quaternion(&self, p: Pixel) -> Quaternion<f32> {
        let i = self.index(p) * 4;
        Quaternion::new(
            self.quat[i],
            self.quat[i + 1],
            self.quat[i + 2],
            self.quat[i + 3],
        )
    }

    pub fn set_quaternion(&mut self, p: Pixel, q: Quaternion<f32>) {
        let i = self.index(p) * 4;
        self.quat[i..i + 4].copy_from_slice(&q.to_array());
    }

    pub fn direction_at(&self, p: Pixel) -> [f32; 2] {
        let i = self.index(p) * 2;
        [self.direction[i], self.direction[i + 1]]
    }

    pub fn set_direction(&mut self, p: Pixel, d: [f32; 2]) {
        let i = self.index(p) * 2;
        self.direction[i..i + 2].copy_from_slice(&d);
    }

    pub fn depth_at(&self, p: Pixel) -> f32 {
        self.depth[self.index(p)]
    }

    pub fn score(&self, p: Pixel, class_id: usize) -> f32 {
        if class_id > self.n_classes {
            return 0.0;
        }
        self.scores[self.index(p) * (self.n_classes + 1) + class_id]
    }

    /// Replaces the score vector of `p` with a one-hot vector for `class_id`.
    pub fn set_one_hot(&mut self, p: Pixel, class_id: usize) {
        let c = self.n_classes + 1;
        let i = self.index(p) * c;
        self.scores[i..i + c].iter_mut().for_each(|s| *s = 0.0);
        self.scores[i + class_id] = 1.0;
        let li = self.index(p);
        self.labels[li] = class_id as u16;
    }

    pub fn label(&self, p: Pixel) -> usize {
        self.labels[self.index(p)] as usize
    }

    /// Recomputes `labels` as the argmax over `scores`.
    pub fn recompute_labels(&mut self) {
        let c = self.n_classes + 1;
        self.labels = self
            .scores
            .chunks_exact(c)
            .map(|s| {
                let mut best = 0;
                for (k, &v) in s.iter().enumerate() {
                    if v > s[best] {
                        best = k;
                    }
                }
                best as u16
            })
            .collect();
    }

    pub fn class_pixels(&self, class_id: usize) -> PixelSet {
        let mut out = Vec::new();
        for v in 0..self.height {
            for u in 0..self.width {
                if self.labels[v * self.width + u] as usize == class_id {
                    out.push(Pixel::new(u as u32, v as u32));
                }
            }
        }
        PixelSet(out)
    }

    /// Number of pixels carrying each label, indexed by class id.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.n_classes + 1];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    pub fn validate_shapes(&self) -> Result<()> {
        let n = self.height * self.width;
        let checks = [
            ("quat", self.quat.len(), n * 4),
            ("direction", self.direction.len(), n * 2),
            ("depth", self.depth.len(), n),
            ("scores", self.scores.len(), n * (self.n_classes + 1)),
            ("labels", self.labels.len(), n),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::invalid(format!(
                    "{name} map has {got} values, expected {want} for {}x{}",
                    self.height, self.width
                )));
            }
        }
        Ok(())
    }
}
