//! Discretized white Gaussian noise and the observed linear functional.
//!
//! The continuum observation X_eps(g) = ∫ f g + eps ∫ g dW is discretized by
//! midpoint Riemann sums: each grid cell carries an independent N(0, Δ)
//! increment, so that Var(Σ g dW) -> eps^2 ∫ g^2 as the grid refines.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::CoreError;
use crate::grid::{Grid, GridFunction};
use crate::math;

/// One realization of the discretized white noise on a grid.
///
/// Increments are reproducible bit-for-bit from `(seed, stream)`; streams
/// give independent replications without re-seeding.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    grid: Grid,
    seed: u64,
    stream: u64,
    increments: Vec<f64>,
}

impl NoiseField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Per-cell increments, each distributed N(0, cell_volume).
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }
}

/// Draw the white-noise increments for a grid, stream 0.
pub fn sample_noise(grid: Grid, seed: u64) -> NoiseField {
    sample_noise_stream(grid, seed, 0)
}

/// Draw the white-noise increments for a grid on a dedicated RNG stream.
///
/// `(seed, stream)` fully determines the field; distinct streams of the same
/// seed are independent, which is how Monte Carlo replications are keyed.
pub fn sample_noise_stream(grid: Grid, seed: u64, stream: u64) -> NoiseField {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let sd = math::sqrt(grid.cell_volume());
    let increments = (0..grid.len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sd
        })
        .collect();
    NoiseField {
        grid,
        seed,
        stream,
        increments,
    }
}

/// A white-noise-model observation: signal plus scaled noise on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    signal: GridFunction,
    noise: NoiseField,
    noise_level: f64,
}

impl Observation {
    /// Combine signal, noise and noise level; grids must match and the noise
    /// level must lie in [0, 1). Zero is admitted for noiseless runs.
    pub fn new(signal: GridFunction, noise: NoiseField, noise_level: f64) -> Result<Self, CoreError> {
        if signal.grid() != noise.grid() {
            return Err(CoreError::GridMismatch);
        }
        if !(0.0..1.0).contains(&noise_level) {
            return Err(CoreError::InvalidArgument(alloc::format!(
                "noise level {noise_level} outside [0, 1)"
            )));
        }
        Ok(Observation {
            signal,
            noise,
            noise_level,
        })
    }

    pub fn signal(&self) -> &GridFunction {
        &self.signal
    }

    pub fn noise(&self) -> &NoiseField {
        &self.noise
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    pub fn grid(&self) -> &Grid {
        self.signal.grid()
    }
}

/// The observed linear functional X_eps(g) = Σ f(x) g(x) Δ + eps Σ g(x) dW_x.
///
/// Linear in `g` to machine precision; the stochastic part has variance
/// eps^2 Σ g^2 Δ.
pub fn apply_functional(obs: &Observation, g: &GridFunction) -> Result<f64, CoreError> {
    if obs.grid() != g.grid() {
        return Err(CoreError::GridMismatch);
    }
    let dv = obs.grid().cell_volume();
    let mut det = 0.0;
    let mut sto = 0.0;
    let f = obs.signal.values();
    let w = obs.noise.increments();
    for (i, gv) in g.values().iter().enumerate() {
        det += f[i] * gv * dv;
        sto += gv * w[i];
    }
    Ok(det + obs.noise_level * sto)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn deterministic_and_seed_sensitive() {
        let g = Grid::new(1, 1.0, 64).unwrap();
        let a = sample_noise(g, 7);
        let b = sample_noise(g, 7);
        assert_eq!(a.increments(), b.increments());
        let c = sample_noise(g, 8);
        assert!(a.increments().iter().zip(c.increments()).any(|(x, y)| x != y));
    }

    #[test]
    fn streams_differ() {
        let g = Grid::new(1, 1.0, 64).unwrap();
        let a = sample_noise_stream(g, 7, 0);
        let b = sample_noise_stream(g, 7, 1);
        assert!(a.increments().iter().zip(b.increments()).any(|(x, y)| x != y));
    }

    #[test]
    fn increments_have_unit_normalized_variance() {
        // chi-square 95% band for 256 samples: sample variance in [0.8, 1.2]
        let g = Grid::new(1, 1.0, 256).unwrap();
        let nf = sample_noise(g, 7);
        let sd = g.cell_volume().sqrt();
        let normalized: Vec<f64> = nf.increments().iter().map(|w| w / sd).collect();
        let mean = normalized.iter().sum::<f64>() / 256.0;
        let var = normalized.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / 255.0;
        assert!((0.8..=1.2).contains(&var), "sample variance {var}");
        // statistical sanity bound on the mean
        assert!(mean.abs() <= 5.0 / 256.0f64.sqrt());
    }

    #[test]
    fn functional_exact_for_constants() {
        let g = Grid::new(1, 1.0, 16).unwrap();
        let f = GridFunction::constant(g, 1.0);
        let nf = sample_noise(g, 3);
        let obs = Observation::new(f, nf, 0.0).unwrap();
        let one = GridFunction::constant(g, 1.0);
        let v = apply_functional(&obs, &one).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        let zero = GridFunction::zeros(g);
        assert_eq!(apply_functional(&obs, &zero).unwrap(), 0.0);
    }

    #[test]
    fn functional_is_linear() {
        let g = Grid::new(1, 1.0, 32).unwrap();
        let f = GridFunction::from_fn(g, |x| x[0].sin());
        let nf = sample_noise(g, 11);
        let obs = Observation::new(f, nf, 0.5).unwrap();
        let g1 = GridFunction::from_fn(g, |x| x[0] * x[0]);
        let g2 = GridFunction::from_fn(g, |x| (3.0 * x[0]).cos());
        let lin = GridFunction::from_values(
            g,
            g1.values()
                .iter()
                .zip(g2.values())
                .map(|(a, b)| 2.0 * a - 0.5 * b)
                .collect(),
        )
        .unwrap();
        let lhs = apply_functional(&obs, &lin).unwrap();
        let rhs = 2.0 * apply_functional(&obs, &g1).unwrap()
            - 0.5 * apply_functional(&obs, &g2).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn rejects_grid_mismatch() {
        let g1 = Grid::new(1, 1.0, 16).unwrap();
        let g2 = Grid::new(1, 1.0, 32).unwrap();
        let f = GridFunction::zeros(g1);
        let nf = sample_noise(g1, 0);
        let obs = Observation::new(f, nf, 0.1).unwrap();
        let g = GridFunction::zeros(g2);
        assert_eq!(apply_functional(&obs, &g), Err(CoreError::GridMismatch));
    }
}
