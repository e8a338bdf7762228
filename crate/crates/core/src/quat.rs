//! Quaternion and rotation matrix arithmetic plus the chordal (Markley)
//! weighted average.
//!
//! Quaternions are stored scalar-first, `(w, x, y, z)`, everywhere in this
//! crate and in every file format it reads or writes.

use std::ops::{Mul, Neg};

use serde::{Deserialize, Serialize};

use crate::eigen::eig_sym4;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Norms below this are treated as a zero prediction.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Tolerance on `|‖q‖ − 1|` for inputs that must be unit quaternions.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Quaternion<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Quaternion<T> {
    pub const fn new(w: T, x: T, y: T, z: T) -> Self {
        Self { w, x, y, z }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: [T; 3], angle: T) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if n <= T::zero() {
            return Self::identity();
        }
        let half = angle / T::lit(2.0);
        let s = half.sin() / n;
        Self::new(half.cos(), axis[0] * s, axis[1] * s, axis[2] * s)
    }

    pub fn dot(&self, other: &Self) -> T {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn is_unit(&self, tol: T) -> bool {
        (self.norm() - T::one()).abs() < tol
    }

    /// Flips the sign so that `w > 0`, or, when `w == 0`, so that the first
    /// nonzero component is positive.
    pub fn canonical(self) -> Self {
        for c in self.to_array() {
            if c > T::zero() {
                return self;
            }
            if c < T::zero() {
                return -self;
            }
        }
        self
    }

    /// Rotates `v` by this (unit) quaternion.
    pub fn rotate(&self, v: [T; 3]) -> [T; 3] {
        mat_vec(&to_matrix_unchecked(self), v)
    }

    pub fn cast<U: Real>(self) -> Quaternion<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        Quaternion::new(c(self.w), c(self.x), c(self.y), c(self.z))
    }
}

impl<T: Real> Neg for Quaternion<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Hamilton product.
impl<T: Real> Mul for Quaternion<T> {
    type Output = Self;
    fn mul(self, r: Self) -> Self {
        let l = self;
        Self::new(
            l.w * r.w - l.x * r.x - l.y * r.y - l.z * r.z,
            l.w * r.x + l.x * r.w + l.y * r.z - l.z * r.y,
            l.w * r.y - l.x * r.z + l.y * r.w + l.z * r.x,
            l.w * r.z + l.x * r.y - l.y * r.x + l.z * r.w,
        )
    }
}

/// Row-major 3×3 rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> RotationMatrix<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = self.m;
        for (i, row) in t.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[j][i];
            }
        }
        Self { m: t }
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut r = [[T::zero(); 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        Self { m: r }
    }

    pub fn apply(&self, v: [T; 3]) -> [T; 3] {
        mat_vec(self, v)
    }

    pub fn determinant(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Squared Frobenius distance to `o`.
    pub fn frobenius_sq(&self, o: &Self) -> T {
        let mut s = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let d = self.m[i][j] - o.m[i][j];
                s += d * d;
            }
        }
        s
    }
}

#[inline]
fn mat_vec<T: Real>(r: &RotationMatrix<T>, v: [T; 3]) -> [T; 3] {
    let m = &r.m;
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Source of the per-sample weights in a [`WeightedQuatSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightSource {
    Unit,
    #[default]
    Norm,
    #[serde(rename = "segm")]
    SegmentationScore,
}

/// Raw (not necessarily unit) quaternion samples with nonnegative weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedQuatSet<T> {
    pub quaternions: Vec<Quaternion<T>>,
    pub weights: Vec<T>,
    pub source: WeightSource,
}

impl<T: Real> WeightedQuatSet<T> {
    pub fn new(
        quaternions: Vec<Quaternion<T>>,
        weights: Vec<T>,
        source: WeightSource,
    ) -> Result<Self> {
        let set = Self {
            quaternions,
            weights,
            source,
        };
        set.validate()?;
        Ok(set)
    }

    /// All weights equal to one.
    pub fn unit(quaternions: Vec<Quaternion<T>>) -> Self {
        let weights = vec![T::one(); quaternions.len()];
        Self {
            quaternions,
            weights,
            source: WeightSource::Unit,
        }
    }

    /// Weight of each sample is its raw norm.
    pub fn norm_weighted(quaternions: Vec<Quaternion<T>>) -> Self {
        let weights = quaternions.iter().map(|q| q.norm()).collect();
        Self {
            quaternions,
            weights,
            source: WeightSource::Norm,
        }
    }

    pub fn len(&self) -> usize {
        self.quaternions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quaternions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.quaternions.len() != self.weights.len() {
            return Err(Error::invalid(format!(
                "{} quaternions but {} weights",
                self.quaternions.len(),
                self.weights.len()
            )));
        }
        if let Some(i) = self
            .weights
            .iter()
            .position(|w| !w.is_finite() || *w < T::zero())
        {
            return Err(Error::invalid(format!(
                "weight {} is {}, weights must be finite and nonnegative",
                i, self.weights[i]
            )));
        }
        Ok(())
    }

    /// Unit-normalized samples paired with their effective weights; entries
    /// with a degenerate norm get weight zero.
    pub fn normalized(&self) -> Vec<(Quaternion<T>, T)> {
        self.quaternions
            .iter()
            .zip(&self.weights)
            .map(|(q, &w)| {
                let (u, n) = normalize(*q);
                (u, if n > T::zero() { w } else { T::zero() })
            })
            .collect()
    }
}

/// Returns `(q/‖q‖, ‖q‖)`; degenerate inputs yield the identity and norm 0.
pub fn normalize<T: Real>(q: Quaternion<T>) -> (Quaternion<T>, T) {
    let n = q.norm();
    if !(n >= T::lit(DEGENERATE_NORM)) || !n.is_finite() {
        return (Quaternion::identity(), T::zero());
    }
    (q.scale(T::one() / n), n)
}

fn to_matrix_unchecked<T: Real>(q: &Quaternion<T>) -> RotationMatrix<T> {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    let one = T::one();
    let two = T::lit(2.0);
    RotationMatrix {
        m: [
            [
                one - two * (y * y + z * z),
                two * (x * y - w * z),
                two * (x * z + w * y),
            ],
            [
                two * (x * y + w * z),
                one - two * (x * x + z * z),
                two * (y * z - w * x),
            ],
            [
                two * (x * z - w * y),
                two * (y * z + w * x),
                one - two * (x * x + y * y),
            ],
        ],
    }
}

/// Rotation matrix of a unit quaternion. `q` and `-q` map to the same matrix.
pub fn to_matrix<T: Real>(q: Quaternion<T>) -> Result<RotationMatrix<T>> {
    if !q.is_unit(T::lit(UNIT_TOLERANCE)) {
        return Err(Error::invalid(format!(
            "to_matrix expects a unit quaternion, got norm {}",
            q.norm()
        )));
    }
    Ok(to_matrix_unchecked(&q))
}

/// Inverse of [`to_matrix`] (Shepperd's method), sign-canonicalized.
pub fn from_matrix<T: Real>(r: &RotationMatrix<T>) -> Quaternion<T> {
    let m = &r.m;
    let one = T::one();
    let quarter = T::lit(0.25);
    let tr = m[0][0] + m[1][1] + m[2][2];
    let q = if tr > m[0][0] && tr > m[1][1] && tr > m[2][2] {
        let s = (one + tr).sqrt() * T::lit(2.0);
        Quaternion::new(
            quarter * s,
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
        )
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * T::lit(2.0);
        Quaternion::new(
            (m[2][1] - m[1][2]) / s,
            quarter * s,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
        )
    } else if m[1][1] > m[2][2] {
        let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * T::lit(2.0);
        Quaternion::new(
            (m[0][2] - m[2][0]) / s,
            (m[0][1] + m[1][0]) / s,
            quarter * s,
            (m[1][2] + m[2][1]) / s,
        )
    } else {
        let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * T::lit(2.0);
        Quaternion::new(
            (m[1][0] - m[0][1]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            quarter * s,
        )
    };
    normalize(q).0.canonical()
}

/// Rotation angle between two unit quaternions, `2·arccos(|q1·q2|)` in `[0, π]`.
///
/// Evaluated through `atan2` of the chord lengths, which keeps full precision
/// for nearly identical rotations where `arccos` loses half the digits.
pub fn angular_distance<T: Real>(q1: Quaternion<T>, q2: Quaternion<T>) -> T {
    let b = if q1.dot(&q2) < T::zero() { -q2 } else { q2 };
    let diff = q1.sub(&b).norm();
    let sum = q1.add(&b).norm();
    T::lit(4.0) * diff.atan2(sum)
}

/// Result of the chordal weighted average.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkleyAverage<T> {
    pub quaternion: Quaternion<T>,
    /// The top eigenvalue is (numerically) repeated, so the maximizer is not unique.
    pub ambiguous: bool,
    pub top_eigenvalue: T,
    pub total_weight: T,
    pub used_count: usize,
}

/// Weighted outer-product accumulator `Σ wᵢ qᵢqᵢᵀ` over normalized samples.
pub fn outer_product_sum<T: Real>(set: &WeightedQuatSet<T>) -> ([[T; 4]; 4], T, usize) {
    let mut m = [[T::zero(); 4]; 4];
    let mut total = T::zero();
    let mut used = 0usize;
    for (q, w) in set.normalized() {
        if w <= T::zero() {
            continue;
        }
        let a = q.to_array();
        for i in 0..4 {
            let wa = w * a[i];
            for j in i..4 {
                m[i][j] += wa * a[j];
            }
        }
        total += w;
        used += 1;
    }
    for i in 0..4 {
        for j in 0..i {
            m[i][j] = m[j][i];
        }
    }
    (m, total, used)
}

/// Minimizer of `Σ wᵢ ‖R(q) − R(qᵢ)‖²_F` over unit quaternions, obtained as
/// the top eigenvector of `Σ wᵢ qᵢqᵢᵀ`.
pub fn markley_average<T: Real>(set: &WeightedQuatSet<T>) -> Result<MarkleyAverage<T>> {
    set.validate()?;
    let (m, total, used) = outer_product_sum(set);
    if used == 0 || total <= T::zero() {
        return Err(Error::empty("all weights are zero"));
    }
    let eig = eig_sym4(&m)?;
    // eigenvalues are sorted descending
    let top = eig.values[0];
    let gap = top - eig.values[1];
    let ambiguous = gap < T::tol(1e-12) * top.abs().max(T::min_positive_value());
    let v = eig.vectors[0];
    let q = normalize(Quaternion::from_array(v)).0.canonical();
    Ok(MarkleyAverage {
        quaternion: q,
        ambiguous,
        top_eigenvalue: top,
        total_weight: total,
        used_count: used,
    })
}

/// The chordal objective `Σ wᵢ ‖R(q) − R(qᵢ)‖²_F` evaluated through the
/// identity `‖R(a) − R(b)‖²_F = 8 (1 − (a·b)²)`.
pub fn chordal_objective<T: Real>(q: Quaternion<T>, set: &WeightedQuatSet<T>) -> T {
    let (u, _) = normalize(q);
    set.normalized()
        .into_iter()
        .map(|(qi, w)| {
            let d = u.dot(&qi);
            w * T::lit(8.0) * (T::one() - d * d)
        })
        .sum()
}
