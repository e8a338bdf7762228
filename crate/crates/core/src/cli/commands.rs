use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::args::*;
use super::{usage, CliError};
use crate::aggregation::{aggregate, select_weights, AggregationConfig, Strategy};
use crate::dense::{CameraIntrinsics, DenseMaps};
use crate::error::{Error, Result};
use crate::hough::{detect_objects, HoughConfig};
use crate::losses::ObjectModel;
use crate::metrics::{
    build_report, evaluate_sample, EvalReport, Pose, SampleRecord, DEFAULT_TAU_MAX,
};
use crate::quat::{Quaternion, WeightSource, WeightedQuatSet};
use crate::scene_io::json::frame_objects;
use crate::scene_io::synth::{random_unit_quaternion, DEFAULT_MODEL_POINTS};
use crate::scene_io::{
    self, procedural_models, random_ground_truth, read_dense_dir, read_gt, read_intrinsics,
    read_models_dir, read_poses, scene_intrinsics, synth_scene, write_model, write_poses,
    write_report, write_samples_csv, write_scene, FrameGt, FramePoses, NoiseSpec, PoseRecord,
    SceneGroundTruth, GT_FILE,
};

/// Everything `aggregate` needs besides the maps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    pub aggregation: AggregationConfig<f64>,
    pub hough: HoughConfig,
    pub mask: MaskArg,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            aggregation: AggregationConfig::default(),
            hough: HoughConfig::default(),
            mask: MaskArg::Segm,
        }
    }
}

impl AggregationArgs {
    pub fn config(&self) -> Result<AggregationConfig<f64>, CliError> {
        let cfg = AggregationConfig {
            strategy: self.strategy,
            weight_source: self.weights.into(),
            prune_fraction: self.lambda,
            ransac_threshold: self.threshold,
            ransac_iterations: self.iters,
            seed: self.seed,
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

/// Detection, weight selection and aggregation for one frame.
pub fn aggregate_scene(
    maps: &DenseMaps,
    k: &CameraIntrinsics,
    frame_id: &str,
    cfg: &PipelineConfig,
) -> Result<FramePoses> {
    let mut objects = Vec::new();
    for det in detect_objects(maps, k, &cfg.hough) {
        let mask = match cfg.mask {
            MaskArg::Segm => maps.class_pixels(det.class_id),
            MaskArg::Inliers => det.inliers.clone(),
        };
        let set: WeightedQuatSet<f64> =
            select_weights(maps, &mask, cfg.aggregation.weight_source, det.class_id)?;
        let o = aggregate(&set, &cfg.aggregation).map_err(|e| match e {
            Error::EmptyAggregation(m) => {
                Error::EmptyAggregation(format!("frame {frame_id:?}, class {}: {m}", det.class_id))
            }
            other => other,
        })?;
        objects.push(PoseRecord {
            class_id: det.class_id,
            quaternion: o.quaternion.to_array(),
            translation: det.translation,
            support: o.support,
            used_count: o.used_count,
            ambiguous: o.ambiguous,
            center: det.center,
            bbox: det.bbox,
            inlier_count: det.inliers.len(),
            pixel_count: det.class_pixel_count,
        });
    }
    Ok(FramePoses {
        frame_id: frame_id.to_string(),
        objects,
    })
}

/// Frame id of a scene directory: the one in its `gt.json`, else the
/// directory name.
pub fn frame_id_for(dir: &Path) -> Result<String> {
    let gt = dir.join(GT_FILE);
    if gt.exists() {
        if let Some(f) = read_gt(&gt)?.first() {
            return Ok(f.frame_id.clone());
        }
    }
    Ok(dir
        .canonicalize()
        .unwrap_or_else(|_| dir.to_path_buf())
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default())
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(usage)
}

pub(super) fn cmd_aggregate(a: &AggregateArgs) -> Result<(), CliError> {
    if !(a.theta_in > 0.0 && a.theta_in.is_finite()) {
        return Err(usage(format!(
            "--theta-in must be positive, got {}",
            a.theta_in
        )));
    }
    let cfg = PipelineConfig {
        aggregation: a.aggregation.config()?,
        hough: HoughConfig {
            theta_in: a.theta_in,
            min_pixels: a.min_pixels,
            depth_mode: a.depth_mode.into(),
        },
        mask: a.mask,
    };
    let k_override = a.intrinsics.as_deref().map(read_intrinsics).transpose()?;
    let frames: Vec<Result<FramePoses>> = thread_pool(a.jobs)?.install(|| {
        a.scenes
            .par_iter()
            .map(|dir| {
                let maps = read_dense_dir(dir, a.log_depth)?;
                let k = match k_override {
                    Some(k) => k,
                    None => scene_intrinsics(dir)?,
                };
                aggregate_scene(&maps, &k, &frame_id_for(dir)?, &cfg)
            })
            .collect()
    });
    let frames = frames.into_iter().collect::<Result<Vec<_>>>()?;
    write_poses(&a.out, &frames)?;
    let n: usize = frames.iter().map(|f| f.objects.len()).sum();
    log::info!(
        "{} frames, {n} objects -> {}",
        frames.len(),
        a.out.display()
    );
    Ok(())
}

/// Scores every ground-truth object; objects without an estimate count as misses.
pub fn evaluate_frames(
    estimates: &[FramePoses],
    gt: &[FrameGt],
    models: &BTreeMap<usize, ObjectModel<f64>>,
    tau_max: f64,
) -> Result<EvalReport> {
    let mut by_frame: BTreeMap<&str, &FramePoses> = BTreeMap::new();
    for f in estimates {
        if by_frame.insert(&f.frame_id, f).is_some() {
            return Err(Error::invalid(format!(
                "duplicate estimate frame {:?}",
                f.frame_id
            )));
        }
    }
    let mut seen = BTreeSet::new();
    let mut samples = Vec::new();
    for frame in gt {
        if !seen.insert(frame.frame_id.as_str()) {
            return Err(Error::invalid(format!(
                "duplicate ground-truth frame {:?}",
                frame.frame_id
            )));
        }
        for obj in frame_objects(frame, Path::new("<gt>"))? {
            let model = models
                .get(&obj.class_id)
                .ok_or_else(|| Error::invalid(format!("no model for class {}", obj.class_id)))?;
            let est = by_frame
                .get(frame.frame_id.as_str())
                .and_then(|f| f.objects.iter().find(|o| o.class_id == obj.class_id));
            samples.push(match est {
                Some(e) => {
                    let pose = Pose::new(Quaternion::from_array(e.quaternion), e.translation);
                    evaluate_sample(&frame.frame_id, &pose, &obj.pose, model)?
                }
                None => SampleRecord::missed(&frame.frame_id, obj.class_id),
            });
        }
    }
    build_report(samples, models, tau_max)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

pub(super) fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    if !(a.tau_max > 0.0 && a.tau_max.is_finite()) {
        return Err(usage(format!(
            "--tau-max must be positive, got {}",
            a.tau_max
        )));
    }
    let models = read_models_dir(&a.models)?;
    let estimates = read_poses(&a.poses)?;
    let mut gt = Vec::new();
    for p in &a.gt {
        let path: PathBuf = if p.is_dir() {
            p.join(GT_FILE)
        } else {
            p.clone()
        };
        gt.extend(read_gt(&path)?);
    }
    let report = evaluate_frames(&estimates, &gt, &models, a.tau_max)?;
    if let Some(out) = &a.out {
        write_report(out, &report)?;
    }
    if let Some(csv) = &a.csv {
        write_samples_csv(csv, &report.samples)?;
    }
    println!("samples                {}", report.samples.len());
    println!("AUC P                  {:.4}", report.pooled.auc_p);
    println!("AUC S                  {:.4}", report.pooled.auc_s);
    println!("rotation-only AUC P    {:.4}", report.pooled.rot_auc_p);
    println!("rotation-only AUC S    {:.4}", report.pooled.rot_auc_s);
    println!("class-wise AUC P       {:.4}", report.classwise.auc_p);
    println!("class-wise AUC S       {:.4}", report.classwise.auc_s);
    println!("NonSymC                {}", fmt_opt(report.nonsymc));
    println!("SymC                   {}", fmt_opt(report.symc));
    println!(
        "mean translation error {}",
        fmt_opt(report.mean_translation_error)
    );
    Ok(())
}

fn noise_from_args(a: &SynthArgs, seed: u64) -> Result<NoiseSpec, CliError> {
    let base = if a.zero_noise {
        NoiseSpec::zero(seed)
    } else {
        NoiseSpec {
            seed,
            ..NoiseSpec::default()
        }
    };
    let noise = NoiseSpec {
        sigma_quat: a.sigma_quat.unwrap_or(base.sigma_quat),
        sigma_dir: a.sigma_dir.unwrap_or(base.sigma_dir),
        sigma_depth: a.sigma_depth.unwrap_or(base.sigma_depth),
        outlier_fraction: a.outlier_fraction.unwrap_or(base.outlier_fraction),
        label_noise: a.label_noise.unwrap_or(base.label_noise),
        seed,
    };
    noise.validate().map_err(usage)?;
    Ok(noise)
}

fn write_synth(
    dir: &Path,
    gt: &SceneGroundTruth,
    mut maps: DenseMaps,
    log_depth: bool,
) -> Result<()> {
    if log_depth {
        maps.depth.iter_mut().for_each(|z| *z = z.ln());
    }
    write_scene(dir, gt, &maps)
}

pub(super) fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    if a.width == 0 || a.height == 0 || a.count == 0 {
        return Err(usage("--width, --height and --count must be positive"));
    }
    let models = read_models_dir(&a.models)?;
    let k = match &a.intrinsics {
        Some(p) => read_intrinsics(p)?,
        None => CameraIntrinsics::default(),
    };
    let mut scenes = Vec::new();
    match &a.gt {
        Some(path) => {
            let frames = read_gt(path)?;
            let nested = frames.len() > 1;
            for (i, f) in frames.iter().enumerate() {
                let gt = SceneGroundTruth::from_frame(f, k, path)?;
                let dir = if nested {
                    a.out.join(&f.frame_id)
                } else {
                    a.out.clone()
                };
                scenes.push((dir, gt, a.seed + i as u64));
            }
        }
        None => {
            for i in 0..a.count {
                let seed = a.seed + i as u64;
                let frame_id = format!("scene_{seed:06}");
                let gt =
                    random_ground_truth(&models, a.objects, k, a.width, a.height, seed, &frame_id)
                        .map_err(usage)?;
                let dir = if a.count > 1 {
                    a.out.join(&frame_id)
                } else {
                    a.out.clone()
                };
                scenes.push((dir, gt, seed));
            }
        }
    }
    for (dir, gt, seed) in scenes {
        let noise = noise_from_args(a, seed)?;
        let maps = synth_scene(&gt, &models, &noise, a.width, a.height)?;
        write_synth(&dir, &gt, maps, a.log_depth)?;
        log::info!("wrote {}", dir.display());
    }
    Ok(())
}

pub(super) fn cmd_gen_models(a: &GenModelsArgs) -> Result<(), CliError> {
    if a.points == 0 {
        return Err(usage("--points must be positive"));
    }
    for m in procedural_models(a.points, a.seed) {
        write_model(&a.out, &m)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct BenchRow {
    pub strategy: &'static str,
    pub median_ms: f64,
    pub mean_ms: f64,
    pub n_quats: usize,
}

/// `n` raw quaternions around one random rotation: 80 % scaled by a
/// confidence in `[0.2, 2]` plus Gaussian noise, 20 % low-norm outliers.
pub fn bench_set(n: usize, seed: u64, source: WeightSource) -> Result<WeightedQuatSet<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = random_unit_quaternion(&mut rng);
    let quats: Vec<Quaternion<f64>> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < 0.2 {
                random_unit_quaternion(&mut rng).scale(rng.random_range(0.0..0.2))
            } else {
                let c: f64 = rng.random_range(0.2..2.0);
                let mut a = truth.scale(c).to_array();
                for v in &mut a {
                    *v += 0.05 * rng.sample::<f64, _>(StandardNormal);
                }
                Quaternion::from_array(a)
            }
        })
        .collect();
    let weights = match source {
        WeightSource::Norm => quats.iter().map(|q| q.norm()).collect(),
        _ => vec![1.0; n],
    };
    WeightedQuatSet::new(quats, weights, source)
}

/// Times `aggregate` for each strategy over `reps` repetitions.
pub fn bench_rows(
    set: &WeightedQuatSet<f64>,
    strategies: &[Strategy],
    base: &AggregationConfig<f64>,
    reps: usize,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &s in strategies {
        let cfg = AggregationConfig {
            strategy: s,
            ..*base
        };
        aggregate(set, &cfg)?;
        let mut times: Vec<f64> = (0..reps.max(1))
            .map(|_| {
                let t = Instant::now();
                let r = aggregate(set, &cfg);
                let dt = t.elapsed().as_secs_f64() * 1e3;
                std::hint::black_box(r).map(|_| dt)
            })
            .collect::<Result<_>>()?;
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        times.sort_by(f64::total_cmp);
        let mid = times.len() / 2;
        let median = if times.len().is_multiple_of(2) {
            (times[mid - 1] + times[mid]) / 2.0
        } else {
            times[mid]
        };
        rows.push(BenchRow {
            strategy: s.cli_name(),
            median_ms: median,
            mean_ms: mean,
            n_quats: set.len(),
        });
    }
    Ok(rows)
}

fn scene_set(dir: &Path, source: WeightSource) -> Result<WeightedQuatSet<f64>> {
    let maps = read_dense_dir(dir, false)?;
    let hist = maps.label_histogram();
    let class = (1..hist.len())
        .max_by_key(|&c| (hist[c], std::cmp::Reverse(c)))
        .filter(|&c| hist[c] > 0)
        .ok_or_else(|| Error::empty(format!("{}: no foreground pixels", dir.display())))?;
    select_weights(&maps, &maps.class_pixels(class), source, class)
}

pub(super) fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let cfg = a.aggregation.config()?;
    if a.reps == 0 || a.n_quats == 0 {
        return Err(usage("--reps and --n-quats must be positive"));
    }
    let strategies = if a.strategies.is_empty() {
        Strategy::ALL.to_vec()
    } else {
        a.strategies.clone()
    };
    let set = match &a.scene {
        Some(dir) => scene_set(dir, cfg.weight_source)?,
        None => bench_set(a.n_quats, cfg.seed, cfg.weight_source)?,
    };
    let rows = bench_rows(&set, &strategies, &cfg, a.reps)?;
    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |e: csv::Error| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(&path, io),
            other => Error::invalid(format!("{}: {other:?}", path.display())),
        }
    };
    match &a.out {
        Some(path) => {
            let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
            for r in &rows {
                w.serialize(r).map_err(csv_err(path))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
            for r in &rows {
                println!(
                    "{:<8} median {:>9.3} ms  mean {:>9.3} ms",
                    r.strategy, r.median_ms, r.mean_ms
                );
            }
        }
        None => {
            let stdout = Path::new("<stdout>");
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in &rows {
                w.serialize(r).map_err(csv_err(stdout))?;
            }
            w.flush().map_err(|e| Error::io(stdout, e))?;
        }
    }
    Ok(())
}

/// All command-line defaults as one JSON document.
pub fn defaults_json() -> Value {
    let agg = AggregationConfig::<f64>::default();
    let hough = HoughConfig::default();
    let k = CameraIntrinsics::default();
    json!({
        "aggregation": {
            "strategy": agg.strategy.cli_name(),
            "weights": agg.weight_source,
            "lambda": agg.prune_fraction,
            "threshold": agg.ransac_threshold,
            "iters": agg.ransac_iterations,
            "seed": agg.seed,
        },
        "hough": {
            "theta_in": hough.theta_in,
            "min_pixels": hough.min_pixels,
            "depth_mode": hough.depth_mode,
            "mask": "segm",
        },
        "evaluate": { "tau_max": DEFAULT_TAU_MAX },
        "synth": {
            "noise": NoiseSpec::default(),
            "objects": DEFAULT_OBJECTS,
            "width": scene_io::synth::DEFAULT_WIDTH,
            "height": scene_io::synth::DEFAULT_HEIGHT,
            "intrinsics": k,
        },
        "bench": { "reps": DEFAULT_BENCH_REPS, "n_quats": DEFAULT_BENCH_QUATS },
        "gen_models": { "points": DEFAULT_MODEL_POINTS, "seed": 0 },
        "jobs": 0,
    })
}
