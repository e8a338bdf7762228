#![allow(dead_code)]

use std::collections::BTreeMap;

use posefuse_core::losses::ObjectModel;
use posefuse_core::quat::Quaternion;
use posefuse_core::scene_io::procedural_models;
use posefuse_core::scene_io::synth::random_unit_quaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_quat(rng: &mut ChaCha8Rng) -> Quaternion<f64> {
    random_unit_quaternion(rng)
}

/// Unit quaternion within roughly `sigma` radians of `q`.
pub fn perturb(rng: &mut ChaCha8Rng, q: Quaternion<f64>, sigma: f64) -> Quaternion<f64> {
    let axis = [
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ];
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let axis = [axis[0] / n, axis[1] / n, axis[2] / n];
    let angle = rng.random_range(-sigma..sigma);
    Quaternion::from_axis_angle(axis, angle) * q
}

pub fn rz(angle: f64) -> Quaternion<f64> {
    Quaternion::from_axis_angle([0.0, 0.0, 1.0], angle)
}

pub fn random_points(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> Vec<[f64; 3]> {
    (0..m)
        .map(|_| {
            [
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
            ]
        })
        .collect()
}

pub fn model(class_id: usize, symmetric: bool, points: Vec<[f64; 3]>) -> ObjectModel<f64> {
    ObjectModel {
        class_id,
        name: format!("m{class_id}"),
        symmetric,
        points,
    }
}

pub fn square() -> ObjectModel<f64> {
    model(
        1,
        true,
        vec![
            [1.0, 1.0, 0.0],
            [-1.0, 1.0, 0.0],
            [-1.0, -1.0, 0.0],
            [1.0, -1.0, 0.0],
        ],
    )
}

pub fn models(points: usize) -> BTreeMap<usize, ObjectModel<f64>> {
    procedural_models(points, 0)
        .into_iter()
        .map(|m| (m.class_id, m))
        .collect()
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}
