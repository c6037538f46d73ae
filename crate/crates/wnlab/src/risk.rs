//! Monte Carlo L_p-risk estimation, oracle benchmarks, the empirical
//! upper-function exceedance check, and rate-slope regression.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use wnlab_core::bandwidth::{BandwidthField, BandwidthVector};
use wnlab_core::error::CoreError;
use wnlab_core::estimator::{bias_terms, directional_bias, kernel_estimate, smoother};
use wnlab_core::grid::{Grid, GridFunction};
use wnlab_core::kernels::ProductKernel;
use wnlab_core::noise::{sample_noise_stream, NoiseField, Observation};
use wnlab_core::selection::{psi, psi_tilde, select, UpperFunctionConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Estimation method run on each replication.
#[derive(Debug, Clone)]
pub enum Method {
    /// A fixed bandwidth field, no selection.
    FixedH(BandwidthField),
    /// Data-driven selection over constant bandwidth vectors.
    SelectConst(Vec<BandwidthVector>),
    /// Data-driven selection over arbitrary bandwidth fields.
    SelectVarying(Vec<BandwidthField>),
}

impl Method {
    fn family(&self, grid: Grid) -> Result<Vec<BandwidthField>, CoreError> {
        match self {
            Method::FixedH(h) => Ok(vec![h.clone()]),
            Method::SelectConst(levels) => levels
                .iter()
                .map(|v| BandwidthField::constant(grid, v.clone()))
                .collect(),
            Method::SelectVarying(fields) => Ok(fields.clone()),
        }
    }

    fn selects(&self) -> bool {
        !matches!(self, Method::FixedH(_))
    }
}

/// One Monte Carlo risk estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskEstimate {
    /// (mean ||f_hat - f||_p^q)^{1/q}.
    pub risk: f64,
    /// Bootstrap standard error of the risk (1000 resamples).
    pub stderr: f64,
    /// Per-replication norms ||f_hat - f||_p.
    pub per_rep_norm: Vec<f64>,
    /// Per-replication selected-bandwidth volume (NaN for fixed h).
    pub per_rep_volume: Vec<f64>,
}

const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Estimate the L_p-risk of a method by Monte Carlo over independent noise
/// streams keyed by (seed, replication). Fully reproducible.
pub fn mc_risk(
    f: &GridFunction,
    method: &Method,
    p: f64,
    q: f64,
    eps: f64,
    reps: usize,
    seed: u64,
    cfg: &UpperFunctionConfig,
    kernel: &ProductKernel,
) -> Result<RiskEstimate, CoreError> {
    if reps < 30 {
        return Err(CoreError::InvalidArgument(
            "at least 30 replications required".into(),
        ));
    }
    let grid = *f.grid();
    let family = method.family(grid)?;
    if family.is_empty() {
        return Err(CoreError::InvalidArgument("empty bandwidth family".into()));
    }
    let results: Result<Vec<(f64, f64)>, CoreError> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let noise = sample_noise_stream(grid, seed, rep as u64);
            let obs = Observation::new(f.clone(), noise, eps)?;
            let (estimate, volume) = if method.selects() {
                let res = select(&obs, &family, eps, cfg, kernel)?;
                let dec = kernel_estimate(&obs, &res.chosen, kernel)?;
                let vol = res
                    .chosen
                    .as_constant()
                    .map(|v| v.volume())
                    .unwrap_or(f64::NAN);
                (dec.estimate, vol)
            } else {
                let dec = kernel_estimate(&obs, &family[0], kernel)?;
                (dec.estimate, f64::NAN)
            };
            let norm = estimate.abs_diff(f)?.lp_norm(p);
            Ok((norm, volume))
        })
        .collect();
    let results = results?;
    let per_rep_norm: Vec<f64> = results.iter().map(|(n, _)| *n).collect();
    let per_rep_volume: Vec<f64> = results.iter().map(|(_, v)| *v).collect();
    let (risk, stderr) = risk_and_stderr(&per_rep_norm, q, seed);
    Ok(RiskEstimate {
        risk,
        stderr,
        per_rep_norm,
        per_rep_volume,
    })
}

/// Plug-in risk (mean of q-th powers)^{1/q} and its bootstrap standard error.
pub fn risk_and_stderr(norms: &[f64], q: f64, seed: u64) -> (f64, f64) {
    let n = norms.len();
    let powers: Vec<f64> = norms.iter().map(|v| v.powf(q)).collect();
    let mean = powers.iter().sum::<f64>() / n as f64;
    let risk = mean.powf(1.0 / q);
    // degenerate sample (noise-free runs): no resampling spread
    let (lo, hi) = powers
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(*v), b.max(*v))
        });
    if lo == hi {
        return (risk, 0.0);
    }
    // nonparametric bootstrap over replications
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let mut resampled = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += powers[rng.gen_range(0..n)];
        }
        resampled.push((acc / n as f64).powf(1.0 / q));
    }
    let rmean = resampled.iter().sum::<f64>() / BOOTSTRAP_RESAMPLES as f64;
    let var = resampled
        .iter()
        .map(|v| (v - rmean) * (v - rmean))
        .sum::<f64>()
        / (BOOTSTRAP_RESAMPLES as f64 - 1.0);
    (risk, var.sqrt())
}

/// The oracle benchmark inf_h { sup_eta ||B_{h,eta}||_p + ||B_h||_p
/// + eps Psi(h) } over a finite family. Noise-free.
pub fn oracle_benchmark(
    f: &GridFunction,
    family: &[BandwidthField],
    p: f64,
    eps: f64,
    cfg: &UpperFunctionConfig,
    kernel: &ProductKernel,
) -> Result<f64, CoreError> {
    Ok(oracle_terms(f, family, p, eps, cfg, kernel)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// The per-member oracle objective sup_eta ||B_{h,eta}||_p + ||B_h||_p
/// + eps Psi(h).
pub fn oracle_terms(
    f: &GridFunction,
    family: &[BandwidthField],
    p: f64,
    eps: f64,
    cfg: &UpperFunctionConfig,
    kernel: &ProductKernel,
) -> Result<Vec<f64>, CoreError> {
    if family.is_empty() {
        return Err(CoreError::InvalidArgument("empty bandwidth family".into()));
    }
    let mut out = Vec::with_capacity(family.len());
    for h in family {
        let mut sup_pair = 0.0f64;
        let mut b_h_norm = 0.0f64;
        for eta in family {
            let (b_pair, b_h) = bias_terms(f, h, eta, kernel)?;
            sup_pair = sup_pair.max(b_pair.lp_norm(p));
            b_h_norm = b_h.lp_norm(p);
        }
        out.push(sup_pair + b_h_norm + eps * psi(h, eps, cfg).value);
    }
    Ok(out)
}

/// The constant-bandwidth oracle term of the specialization:
/// min_h [ 3 ||kernel||_1^d sum_j ||b_{h,j}||_p + eps Psi_const(h) ].
pub fn corollary_benchmark(
    f: &GridFunction,
    levels: &[BandwidthVector],
    p: f64,
    eps: f64,
    cfg: &UpperFunctionConfig,
    kernel: &ProductKernel,
) -> Result<f64, CoreError> {
    if levels.is_empty() {
        return Err(CoreError::InvalidArgument("empty bandwidth family".into()));
    }
    let grid = *f.grid();
    let d = grid.dim();
    let k1d = kernel.norm(1.0);
    let mut best = f64::INFINITY;
    for v in levels {
        let mut bias_sum = 0.0;
        for axis in 0..d {
            bias_sum += directional_bias(f, v, kernel, axis)?.lp_norm(p);
        }
        let field = BandwidthField::constant(grid, v.clone())?;
        let term = 3.0 * k1d * bias_sum + eps * psi(&field, eps, cfg).value;
        best = best.min(term);
    }
    Ok(best)
}

/// Pure-noise kernel field xi_h for one noise realization (the stochastic
/// term of the estimate divided by the noise level).
pub fn xi_field(
    noise: &NoiseField,
    field: &BandwidthField,
    kernel: &ProductKernel,
) -> Result<GridFunction, CoreError> {
    let grid = *noise.grid();
    let zero = GridFunction::zeros(grid);
    let obs = Observation::new(zero, noise.clone(), 0.5)?;
    let dec = kernel_estimate(&obs, field, kernel)?;
    Ok(dec.stochastic.scale(1.0 / 0.5))
}

/// FFT-backed evaluation of the pure-noise fields xi_h for many constant
/// 1-d bandwidths at once. Mathematically the same discrete correlation as
/// [`xi_field`] (zero extension, renormalized weights); the transform route
/// makes large grids with wide kernel windows tractable.
pub struct XiFftPlan {
    grid: Grid,
    fft_len: usize,
    forward: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inverse: std::sync::Arc<dyn rustfft::Fft<f64>>,
    /// Spectrum of the normalized weight vector per requested level.
    weight_spectra: Vec<Vec<rustfft::num_complex::Complex<f64>>>,
}

impl XiFftPlan {
    /// Plan transforms for a 1-d grid and a set of lattice levels;
    /// levels must be resolvable (window of at least two cells).
    pub fn new(grid: Grid, levels: &[u32], kernel: &ProductKernel) -> Result<Self, CoreError> {
        if grid.dim() != 1 {
            return Err(CoreError::InvalidArgument(
                "the FFT noise path is one-dimensional".into(),
            ));
        }
        let cw = grid.cell_width();
        let n = grid.points_per_axis();
        let mut max_radius = 0usize;
        let mut weight_vecs = Vec::with_capacity(levels.len());
        for &s in levels {
            let h = wnlab_core::bandwidth::h_of(s);
            if h < 2.0 * cw {
                return Err(CoreError::Unresolvable { axis: 0, level: s });
            }
            let radius = (kernel.support() * h / cw + 1e-12).floor() as i64;
            let mut w: Vec<f64> = (-radius..=radius)
                .map(|o| kernel.scalar().eval(o as f64 * cw / h) * cw / h)
                .collect();
            let sum: f64 = w.iter().sum();
            if sum.abs() < 0.1 {
                return Err(CoreError::Unresolvable { axis: 0, level: s });
            }
            for v in &mut w {
                *v /= sum;
            }
            max_radius = max_radius.max(radius as usize);
            weight_vecs.push((radius, w));
        }
        let fft_len = (n + 2 * max_radius + 1).next_power_of_two();
        let mut planner = rustfft::FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let weight_spectra = weight_vecs
            .into_iter()
            .map(|(radius, w)| {
                use rustfft::num_complex::Complex;
                let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
                for (i, o) in (-radius..=radius).enumerate() {
                    let idx = o.rem_euclid(fft_len as i64) as usize;
                    buf[idx].re = w[i];
                }
                forward.process(&mut buf);
                buf
            })
            .collect();
        Ok(XiFftPlan {
            grid,
            fft_len,
            forward,
            inverse,
            weight_spectra,
        })
    }

    /// xi_h for every planned level on one noise realization.
    pub fn xi_fields(&self, noise: &NoiseField) -> Result<Vec<GridFunction>, CoreError> {
        use rustfft::num_complex::Complex;
        if noise.grid() != &self.grid {
            return Err(CoreError::GridMismatch);
        }
        let n = self.grid.points_per_axis();
        let mut spectrum = vec![Complex::new(0.0, 0.0); self.fft_len];
        for (i, w) in noise.increments().iter().enumerate() {
            spectrum[i].re = *w;
        }
        self.forward.process(&mut spectrum);
        let scale = 1.0 / (self.fft_len as f64 * self.grid.cell_volume());
        let mut out = Vec::with_capacity(self.weight_spectra.len());
        for wspec in &self.weight_spectra {
            let mut buf: Vec<Complex<f64>> = spectrum
                .iter()
                .zip(wspec)
                .map(|(a, b)| a * b)
                .collect();
            self.inverse.process(&mut buf);
            let values: Vec<f64> = buf[..n].iter().map(|c| c.re * scale).collect();
            out.push(GridFunction::from_values(self.grid, values)?);
        }
        Ok(out)
    }
}

/// Outcome of the empirical upper-function check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpperFunctionReport {
    /// Empirical q-th moment of sup_h [ ||xi_h||_p - Psi_tilde(h) ]_+.
    pub moment: f64,
    /// Budget (C3 eps)^q with the configured (possibly inflated) constants.
    pub budget: f64,
    /// moment / budget.
    pub ratio: f64,
    /// Replications with a positive exceedance.
    pub exceedances: usize,
    pub reps: usize,
}

/// Simulate pure-noise estimates and compare the exceedance moment of the
/// baseline upper function against its theoretical budget.
pub fn upper_function_check(
    grid: Grid,
    family: &[BandwidthField],
    q: f64,
    eps: f64,
    reps: usize,
    cfg: &UpperFunctionConfig,
    kernel: &ProductKernel,
    seed: u64,
) -> Result<UpperFunctionReport, CoreError> {
    if reps < 100 {
        return Err(CoreError::InvalidArgument(
            "at least 100 replications required".into(),
        ));
    }
    if family.is_empty() {
        return Err(CoreError::InvalidArgument("empty bandwidth family".into()));
    }
    let psis: Vec<f64> = family.iter().map(|h| psi_tilde(h, eps, cfg)).collect();
    // FFT route for 1-d constant families; direct convolution otherwise
    let fft_plan = if grid.dim() == 1 && family.iter().all(|f| f.as_constant().is_some()) {
        let levels: Vec<u32> = family
            .iter()
            .map(|f| f.as_constant().unwrap().levels()[0])
            .collect();
        Some(XiFftPlan::new(grid, &levels, kernel)?)
    } else {
        None
    };
    let sups: Result<Vec<f64>, CoreError> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let noise = sample_noise_stream(grid, seed, rep as u64);
            let mut sup = 0.0f64;
            if let Some(plan) = &fft_plan {
                for (xi, psi_h) in plan.xi_fields(&noise)?.iter().zip(&psis) {
                    let exc = xi.lp_norm(cfg.p) - psi_h;
                    if exc > sup {
                        sup = exc;
                    }
                }
            } else {
                for (h, psi_h) in family.iter().zip(&psis) {
                    let xi = xi_field(&noise, h, kernel)?;
                    let exc = xi.lp_norm(cfg.p) - psi_h;
                    if exc > sup {
                        sup = exc;
                    }
                }
            }
            Ok(sup)
        })
        .collect();
    let sups = sups?;
    let exceedances = sups.iter().filter(|s| **s > 0.0).count();
    let moment = sups.iter().map(|s| s.powf(q)).sum::<f64>() / reps as f64;
    let budget = (cfg.c3 * eps).powf(q);
    Ok(UpperFunctionReport {
        moment,
        budget,
        ratio: moment / budget,
        exceedances,
        reps,
    })
}

/// Ordinary least squares of ln(risk) on ln(x).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    /// 95% confidence half-width of the slope.
    pub halfwidth: f64,
    pub intercept: f64,
}

/// Fit ln(risk) against ln(x) over at least four points spanning a decade.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit, CoreError> {
    if points.len() < 4 {
        return Err(CoreError::InvalidArgument(
            "rate fit needs at least 4 points".into(),
        ));
    }
    let xs: Vec<f64> = points.iter().map(|(x, _)| x.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, y)| y.ln()).collect();
    let x_min = points.iter().map(|(x, _)| *x).fold(f64::INFINITY, f64::min);
    let x_max = points.iter().map(|(x, _)| *x).fold(0.0f64, f64::max);
    if !(x_max / x_min >= 10.0) {
        return Err(CoreError::InvalidArgument(
            "rate fit needs x values spanning at least one decade".into(),
        ));
    }
    let n = xs.len() as f64;
    let x_bar = xs.iter().sum::<f64>() / n;
    let y_bar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_bar) * (x - x_bar)).sum();
    if sxx <= 0.0 {
        return Err(CoreError::InvalidArgument("degenerate x spread".into()));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_bar) * (y - y_bar))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let dof = (xs.len() - 2) as f64;
    let se = if dof > 0.0 { (rss / dof / sxx).sqrt() } else { 0.0 };
    let t = if dof > 0.0 {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        StudentsT::new(0.0, 1.0, dof)
            .map(|d| d.inverse_cdf(0.975))
            .unwrap_or(2.0)
    } else {
        0.0
    };
    Ok(RateFit {
        slope,
        halfwidth: t * se,
        intercept,
    })
}

/// Helper: f_hat via fixed smoothing of the observation signal (noise-free
/// risk path for eps = 0 experiments).
pub fn noiseless_risk(
    f: &GridFunction,
    field: &BandwidthField,
    p: f64,
    kernel: &ProductKernel,
) -> Result<f64, CoreError> {
    Ok(smoother(f, field, kernel)?.abs_diff(f)?.lp_norm(p))
}
