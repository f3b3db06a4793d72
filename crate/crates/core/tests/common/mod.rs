//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

pub mod bench;
pub mod gradcheck;
pub mod oracle;

use histo_adapt::nn::{Matrix, Tensor};
use histo_adapt::networks::{ArchConfig, PoolSpec, StageSpec};
use histo_adapt::rng::rng_for;
use rand::Rng as _;

/// Two-stage network small enough for finite differences.
pub fn tiny_arch() -> ArchConfig {
    ArchConfig {
        input_size: 10,
        stages: vec![
            StageSpec { channels: 3, kernel: 3, stride: 1, padding: 1, pool: Some(PoolSpec { kernel: 2, stride: 2 }) },
            StageSpec { channels: 4, kernel: 3, stride: 1, padding: 1, pool: None },
        ],
        discriminator_hidden: 5,
        leaky_slope: 0.2,
    }
}

pub fn random_tensor(batch: usize, size: usize, seed: u64) -> Tensor {
    let mut rng = rng_for(seed, &[]);
    let samples: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..3 * size * size).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    Tensor::from_samples(&samples, 3, size, size).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = rng_for(seed, &[]);
    Matrix {
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

pub fn report(name: &str, pass: bool, detail: &str) -> bool {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}
