//! Seeded additive Gaussian noise at a relative level.
//!
//! Samples come from ChaCha20 (`rand_chacha` 0.3, `seed_from_u64`) turned
//! into standard normals with the Box-Muller transform, so a given seed
//! produces the same noise on every platform.

use std::f64::consts::TAU;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::operator::Sinogram;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub epsilon: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(epsilon: f64, seed: u64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise level must be >= 0 (got {epsilon})"
            )));
        }
        Ok(Self { epsilon, seed })
    }
}

/// `n` i.i.d. standard normal samples from the seeded stream.
pub fn standard_normals(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // Uniform in (0, 1] from the top 53 bits.
    let mut unif = move || ((rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let (u1, u2) = (unif(), unif());
        let rad = (-2.0 * u1.ln()).sqrt();
        out.push(rad * (TAU * u2).cos());
        out.push(rad * (TAU * u2).sin());
    }
    out.truncate(n);
    out
}

/// `b + eps * g * ||b|| / sqrt(n)`.
pub fn add_noise_vec(b: &[f64], spec: &NoiseSpec) -> Result<Vec<f64>> {
    NoiseSpec::new(spec.epsilon, spec.seed)?;
    if b.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot add noise to empty data".into(),
        ));
    }
    if spec.epsilon == 0.0 {
        return Ok(b.to_vec());
    }
    let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = spec.epsilon * norm / (b.len() as f64).sqrt();
    let g = standard_normals(spec.seed, b.len());
    Ok(b.iter().zip(&g).map(|(v, gi)| v + scale * gi).collect())
}

pub fn add_noise(b: &Sinogram, spec: &NoiseSpec) -> Result<Sinogram> {
    Sinogram::from_values(b.geom.clone(), add_noise_vec(&b.values, spec)?)
}

/// `||out - b|| / ||b||`.
pub fn realized_level(b: &[f64], out: &[f64]) -> f64 {
    let num: f64 = b.iter().zip(out).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|x| x * x).sum();
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize) -> Vec<f64> {
        (0..n).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect()
    }

    #[test]
    fn zero_level_is_identity() {
        let b = data(100);
        assert_eq!(
            add_noise_vec(
                &b,
                &NoiseSpec {
                    epsilon: 0.0,
                    seed: 9
                }
            )
            .unwrap(),
            b
        );
    }

    #[test]
    fn negative_level_rejected() {
        assert!(NoiseSpec::new(-0.1, 0).is_err());
        assert!(add_noise_vec(
            &[1.0],
            &NoiseSpec {
                epsilon: -1.0,
                seed: 0
            }
        )
        .is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let b = data(1000);
        let s = NoiseSpec::new(0.05, 42).unwrap();
        let x = add_noise_vec(&b, &s).unwrap();
        let y = add_noise_vec(&b, &s).unwrap();
        assert!(x.iter().zip(&y).all(|(a, c)| a.to_bits() == c.to_bits()));
        let z = add_noise_vec(&b, &NoiseSpec::new(0.05, 43).unwrap()).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn realized_level_matches_sample_norm() {
        let b = data(71640);
        let s = NoiseSpec::new(0.05, 7).unwrap();
        let out = add_noise_vec(&b, &s).unwrap();
        let g = standard_normals(7, b.len());
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt() / (b.len() as f64).sqrt();
        assert!((realized_level(&b, &out) - 0.05 * gn).abs() < 1e-12);
        let lvl = realized_level(&b, &out);
        assert!((0.0495..=0.0505).contains(&lvl), "{lvl}");
    }

    #[test]
    fn normals_have_unit_moments() {
        let g = standard_normals(1, 200_001);
        assert_eq!(g.len(), 200_001);
        let n = g.len() as f64;
        let mean = g.iter().sum::<f64>() / n;
        let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(
            mean.abs() < 0.01 && (var - 1.0).abs() < 0.01,
            "{mean} {var}"
        );
    }
}
