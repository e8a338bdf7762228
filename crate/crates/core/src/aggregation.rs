//! Fusing a set of dense quaternion predictions into one orientation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{DenseMaps, PixelSet};
use crate::error::{Error, Result};
use crate::quat::{markley_average, normalize, Quaternion, WeightSource, WeightedQuatSet};
use crate::scalar::Real;

pub const DEFAULT_RANSAC_ITERATIONS: usize = 50;
pub const DEFAULT_RANSAC_THRESHOLD: f64 = 0.2;
pub const DEFAULT_PRUNE_FRACTION: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    NaiveAverage,
    MarkleyAverage,
    Pruned,
    Ransac,
    WeightedRansac,
    MostConfident,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::NaiveAverage,
        Strategy::MarkleyAverage,
        Strategy::Pruned,
        Strategy::Ransac,
        Strategy::WeightedRansac,
        Strategy::MostConfident,
    ];

    /// Short name used on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            Strategy::NaiveAverage => "naive",
            Strategy::MarkleyAverage => "average",
            Strategy::Pruned => "pruned",
            Strategy::Ransac => "ransac",
            Strategy::WeightedRansac => "wransac",
            Strategy::MostConfident => "topk1",
        }
    }

    pub fn from_cli_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.cli_name() == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig<T> {
    pub strategy: Strategy,
    pub weight_source: WeightSource,
    /// Fraction λ ∈ [0, 1) of least-confident samples dropped by `Pruned`.
    pub prune_fraction: T,
    /// Inlier threshold in radians for the RANSAC strategies.
    pub ransac_threshold: T,
    pub ransac_iterations: usize,
    pub seed: u64,
}

impl<T: Real> Default for AggregationConfig<T> {
    fn default() -> Self {
        Self {
            strategy: Strategy::MarkleyAverage,
            weight_source: WeightSource::Norm,
            prune_fraction: T::lit(DEFAULT_PRUNE_FRACTION),
            ransac_threshold: T::lit(DEFAULT_RANSAC_THRESHOLD),
            ransac_iterations: DEFAULT_RANSAC_ITERATIONS,
            seed: 0,
        }
    }
}

impl<T: Real> AggregationConfig<T> {
    pub fn with_strategy(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.prune_fraction;
        if !(l >= T::zero() && l < T::one()) {
            return Err(Error::invalid(format!("prune fraction {l} outside [0, 1)")));
        }
        if matches!(self.strategy, Strategy::Ransac | Strategy::WeightedRansac) {
            if !(self.ransac_threshold > T::zero()) {
                return Err(Error::invalid(format!(
                    "RANSAC threshold must be positive, got {}",
                    self.ransac_threshold
                )));
            }
            if self.ransac_iterations == 0 {
                return Err(Error::invalid("RANSAC needs at least one iteration"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregatedOrientation<T> {
    pub quaternion: Quaternion<T>,
    /// Sum of the weights of the samples that determined the result.
    pub support: T,
    pub used_count: usize,
    pub ambiguous: bool,
}

/// Runs the strategy selected in `cfg`.
pub fn aggregate<T: Real>(
    set: &WeightedQuatSet<T>,
    cfg: &AggregationConfig<T>,
) -> Result<AggregatedOrientation<T>> {
    cfg.validate()?;
    match cfg.strategy {
        Strategy::NaiveAverage => naive_average(set),
        Strategy::MarkleyAverage => weighted_average(set),
        Strategy::Pruned => prune_and_average(set, cfg.prune_fraction),
        Strategy::Ransac | Strategy::WeightedRansac => ransac_cluster(set, cfg),
        Strategy::MostConfident => most_confident(set),
    }
}

/// Normalized sum of the raw quaternions; weights are ignored.
pub fn naive_average<T: Real>(set: &WeightedQuatSet<T>) -> Result<AggregatedOrientation<T>> {
    set.validate()?;
    let mut sum = Quaternion::new(T::zero(), T::zero(), T::zero(), T::zero());
    let mut used = 0;
    for q in &set.quaternions {
        if normalize(*q).1 > T::zero() {
            sum = sum.add(q);
            used += 1;
        }
    }
    let (u, n) = normalize(sum);
    if used == 0 || n <= T::zero() {
        return Err(Error::empty("quaternion sum vanishes"));
    }
    Ok(AggregatedOrientation {
        quaternion: u.canonical(),
        support: T::from_usize_lossy(used),
        used_count: used,
        ambiguous: false,
    })
}

/// Chordal (Markley) weighted average of all samples.
pub fn weighted_average<T: Real>(set: &WeightedQuatSet<T>) -> Result<AggregatedOrientation<T>> {
    let avg = markley_average(set)?;
    Ok(AggregatedOrientation {
        quaternion: avg.quaternion,
        support: avg.total_weight,
        used_count: avg.used_count,
        ambiguous: avg.ambiguous,
    })
}

/// Number of samples kept when a fraction `lambda` of `n` is dropped:
/// `⌈(1 − λ)·n⌉`, at least one.
pub fn pruned_keep_count<T: Real>(n: usize, lambda: T) -> usize {
    let x = lambda.to_f64_lossy() * n as f64;
    let r = x.round();
    let removed = if (x - r).abs() < 1e-9 { r } else { x.floor() };
    n.saturating_sub(removed.max(0.0) as usize).max(1).min(n)
}

/// Indices ordered by weight descending, ties by original index.
pub fn confidence_order<T: Real>(weights: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| {
        weights[b]
            .partial_cmp(&weights[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx
}

/// Keeps the ⌈(1 − λ)·n⌉ most confident samples and averages them.
pub fn prune_and_average<T: Real>(
    set: &WeightedQuatSet<T>,
    lambda: T,
) -> Result<AggregatedOrientation<T>> {
    set.validate()?;
    if !(lambda >= T::zero() && lambda < T::one()) {
        return Err(Error::invalid(format!(
            "prune fraction {lambda} outside [0, 1)"
        )));
    }
    if set.is_empty() {
        return Err(Error::empty("no samples to prune"));
    }
    let kept = prune(set, lambda);
    weighted_average(&kept)
}

/// The surviving subset used by [`prune_and_average`], in input order.
pub fn prune<T: Real>(set: &WeightedQuatSet<T>, lambda: T) -> WeightedQuatSet<T> {
    let keep = pruned_keep_count(set.len(), lambda);
    let mut kept = confidence_order(&set.weights);
    kept.truncate(keep);
    // original order keeps λ = 0 bit-identical to the unpruned average
    kept.sort_unstable();
    let (quaternions, weights) = kept
        .iter()
        .map(|&i| (set.quaternions[i], set.weights[i]))
        .unzip();
    WeightedQuatSet {
        quaternions,
        weights,
        source: set.source,
    }
}

/// The single highest-weight sample (earliest index on ties).
pub fn most_confident<T: Real>(set: &WeightedQuatSet<T>) -> Result<AggregatedOrientation<T>> {
    set.validate()?;
    let normalized = set.normalized();
    let best = confidence_order(&normalized.iter().map(|(_, w)| *w).collect::<Vec<_>>())
        .into_iter()
        .next()
        .filter(|&i| normalized[i].1 > T::zero())
        .ok_or_else(|| Error::empty("no sample with positive weight"))?;
    Ok(AggregatedOrientation {
        quaternion: normalized[best].0.canonical(),
        support: normalized[best].1,
        used_count: 1,
        ambiguous: false,
    })
}

/// Draws an index with probability proportional to its weight by inverse
/// transform over the cumulative weights. Zero-weight entries are never drawn.
fn draw<T: Real>(cumulative: &[T], total: T, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let target = T::lit(u) * total;
    let i = cumulative.partition_point(|&c| c <= target);
    if i < cumulative.len() {
        return i;
    }
    // target rounded up to the total: take the last entry with positive weight
    let last = cumulative[cumulative.len() - 1];
    cumulative.partition_point(|&c| c < last)
}

/// RANSAC over the samples: repeatedly draws a hypothesis, collects the
/// samples within `ransac_threshold` of it, and returns the hypothesis with
/// the largest inlier score.
///
/// `Ransac` draws uniformly and scores inliers by count; `WeightedRansac`
/// draws proportional to weight and scores by inlier weight. Draws are with
/// replacement. Ties keep the earliest iteration.
pub fn ransac_cluster<T: Real>(
    set: &WeightedQuatSet<T>,
    cfg: &AggregationConfig<T>,
) -> Result<AggregatedOrientation<T>> {
    set.validate()?;
    let mut cfg = *cfg;
    if !matches!(cfg.strategy, Strategy::Ransac | Strategy::WeightedRansac) {
        cfg.strategy = Strategy::WeightedRansac;
    }
    cfg.validate()?;
    let weighted = cfg.strategy == Strategy::WeightedRansac;

    let normalized = set.normalized();
    let units: Vec<[T; 4]> = normalized.iter().map(|(q, _)| q.to_array()).collect();
    let weights: Vec<T> = set
        .quaternions
        .iter()
        .zip(&normalized)
        .map(|(raw, (_, w))| {
            if normalize(*raw).1 <= T::zero() {
                T::zero()
            } else if weighted {
                *w
            } else {
                T::one()
            }
        })
        .collect();

    let mut cumulative = Vec::with_capacity(weights.len());
    let mut total = T::zero();
    for &w in &weights {
        total += w;
        cumulative.push(total);
    }
    if !(total > T::zero()) {
        return Err(Error::empty("no sample with positive weight for RANSAC"));
    }

    let half = cfg.ransac_threshold / T::lit(2.0);
    // d(q, h) < t  ⇔  |q·h| > cos(t/2) for t ≤ π; larger t admits everything
    let all_inliers = cfg.ransac_threshold > T::PI();
    let cos_half = half.cos();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, T, usize)> = None;
    for _ in 0..cfg.ransac_iterations {
        let h = draw(&cumulative, total, &mut rng);
        let hq = units[h];
        let mut score = T::zero();
        let mut count = 0usize;
        for (q, &w) in units.iter().zip(&weights) {
            if w <= T::zero() {
                continue;
            }
            let d = (q[0] * hq[0] + q[1] * hq[1] + q[2] * hq[2] + q[3] * hq[3]).abs();
            if all_inliers || d > cos_half {
                score += w;
                count += 1;
            }
        }
        if best.is_none_or(|(_, s, _)| score > s) {
            best = Some((h, score, count));
        }
    }
    let (h, support, used_count) = best.expect("at least one iteration");
    Ok(AggregatedOrientation {
        quaternion: normalized[h].0.canonical(),
        support,
        used_count,
        ambiguous: false,
    })
}

/// Gathers the raw quaternions at `mask` together with their weights.
pub fn select_weights<T: Real>(
    dense: &DenseMaps,
    mask: &PixelSet,
    source: WeightSource,
    class_id: usize,
) -> Result<WeightedQuatSet<T>> {
    if mask.is_empty() {
        return Err(Error::empty(format!(
            "empty pixel mask for class {class_id}"
        )));
    }
    let mut quaternions = Vec::with_capacity(mask.len());
    let mut weights = Vec::with_capacity(mask.len());
    for &p in mask.iter() {
        if !dense.in_bounds(p.u as i64, p.v as i64) {
            return Err(Error::invalid(format!(
                "mask pixel ({}, {}) outside {}x{} maps",
                p.u, p.v, dense.width, dense.height
            )));
        }
        let q: Quaternion<T> = dense.quaternion(p).cast();
        let w = match source {
            WeightSource::Unit => T::one(),
            WeightSource::Norm => q.norm(),
            WeightSource::SegmentationScore => T::lit(dense.score(p, class_id) as f64),
        };
        quaternions.push(q);
        weights.push(w);
    }
    WeightedQuatSet::new(quaternions, weights, source)
}
