#![allow(dead_code)]

use std::f64::consts::PI;

use lqt_ioc::data::{generate_reference, synth_dataset, Dataset, HorizonDistribution, ReferenceOffset, Waveform};
use lqt_ioc::linalg::{Mat, Vector};
use lqt_ioc::lq::{discretize, ContinuousLti, CostParams, DiscreteLti, NoiseModel, ReferenceSignal};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn device() -> DiscreteLti {
    discretize(&ContinuousLti::rotating_mass(0.2, 0.255).unwrap(), 0.05).unwrap()
}

pub fn training_reference(sys: &DiscreteLti, nu2: usize) -> ReferenceSignal {
    generate_reference(
        "train",
        sys,
        &Vector::from_vec(vec![0.0, -0.5]),
        &Waveform::Sin { amplitude: 0.01, omega: PI / 40.0 },
        nu2,
    )
    .unwrap()
}

/// Full-horizon noiseless data with both start coordinates spread.
pub fn excited_dataset(sys: &DiscreteLti, q: &Mat, reference: &ReferenceSignal, count: usize, seed: u64) -> Dataset {
    let init = ReferenceOffset { half_width: vec![PI / 6.0, 0.5], anchored: vec![true, true] };
    synth_dataset(
        sys,
        &CostParams::new(q.clone()).unwrap(),
        reference,
        &HorizonDistribution::point(reference.nu2()).unwrap(),
        &init,
        &NoiseModel::zero(sys.m()),
        count,
        seed,
    )
    .unwrap()
}

pub fn gaussian_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// Random `G Gᵀ / n`, possibly rank deficient.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let k = rng.random_range(1..=n);
    let g = gaussian_mat(rng, n, k);
    &g * g.transpose() / n as f64
}

/// Random controllable system with moderate spectral radius.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DiscreteLti {
    loop {
        let a = gaussian_mat(rng, n, n) / (n as f64).sqrt() * 0.9;
        let b = gaussian_mat(rng, n, m);
        if let Ok(sys) = DiscreteLti::new(a, b, None) {
            return sys;
        }
    }
}

pub fn random_reference(rng: &mut ChaCha8Rng, id: &str, n: usize, nu2: usize) -> ReferenceSignal {
    ReferenceSignal::new(id, (0..nu2).map(|_| gaussian_vec(rng, n)).collect()).unwrap()
}
