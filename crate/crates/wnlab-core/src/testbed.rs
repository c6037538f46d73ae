//! Lower-bound test-function families: translated products of a flat bump
//! over a Varshamov-Gilbert-separated index set, with per-zone parameter
//! recipes and numerically calibrated amplitude constants.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::CoreError;
use crate::grid::{Grid, GridFunction};
use crate::math;
use crate::nikolskii::ClassSpec;
use crate::quad;
use crate::rates::{self, Zone};

/// The flat bump g(t) = exp(-1/(1-t^2)) on (-1, 1), zero outside.
pub fn bump(t: f64) -> f64 {
    if math::abs(t) >= 1.0 {
        0.0
    } else {
        math::exp(-1.0 / (1.0 - t * t))
    }
}

/// Cap on the materialized packing size; the analytic cardinality bound can
/// be astronomically large while experiments only ever touch a few thousand
/// members.
pub const VG_TARGET_CAP: usize = 4096;

/// Exhaustively verified properties of a packing returned by [`vg_set`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VgCertificate {
    pub m: usize,
    pub n: usize,
    /// Analytic cardinality bound 2^{-m} (n/m - 1)^{m/2}.
    pub cardinality_bound: f64,
    /// The materialized target: the bound, capped at [`VG_TARGET_CAP`].
    pub target: usize,
    pub cardinality: usize,
    /// Smallest pairwise Hamming distance found (n+1 when fewer than two
    /// vectors).
    pub min_distance: usize,
    pub weights_ok: bool,
    pub pass: bool,
}

/// A set of weight-m binary n-vectors with pairwise Hamming distance >= m/2,
/// stored as sorted support-index sets.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VgSet {
    pub n: usize,
    pub m: usize,
    pub vectors: Vec<Vec<u32>>,
    pub certificate: VgCertificate,
}

fn hamming_supports(a: &[u32], b: &[u32]) -> usize {
    // both sorted; distance = |a| + |b| - 2 |a ∩ b|
    let mut i = 0;
    let mut j = 0;
    let mut common = 0;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    a.len() + b.len() - 2 * common
}

fn packing_target(m: usize, n: usize) -> (f64, usize) {
    let bound = math::powf(2.0, -(m as f64)) * math::powf(n as f64 / m as f64 - 1.0, m as f64 / 2.0);
    let target = if bound >= VG_TARGET_CAP as f64 {
        VG_TARGET_CAP
    } else {
        math::ceil(bound).max(1.0) as usize
    };
    (bound, target)
}

fn verify_packing(vectors: &[Vec<u32>], m: usize, n: usize) -> VgCertificate {
    let (bound, target) = packing_target(m, n);
    let weights_ok = vectors
        .iter()
        .all(|v| v.len() == m && v.iter().all(|i| (*i as usize) < n));
    let mut min_distance = n + 1;
    for i in 0..vectors.len() {
        for j in 0..i {
            min_distance = min_distance.min(hamming_supports(&vectors[i], &vectors[j]));
        }
    }
    let distance_ok = 2 * min_distance >= m; // distance >= m/2
    let pass = weights_ok && distance_ok && vectors.len() >= target;
    VgCertificate {
        m,
        n,
        cardinality_bound: bound,
        target,
        cardinality: vectors.len(),
        min_distance,
        weights_ok,
        pass,
    }
}

/// Randomized greedy packing of weight-m vectors in {0,1}^n with pairwise
/// Hamming distance >= m/2 and cardinality at least 2^{-m} (n/m - 1)^{m/2};
/// 64 restarts, then an error carrying the best attempt. The returned set
/// always comes with an exhaustively checked certificate, so correctness
/// does not rest on the construction heuristic.
pub fn vg_set(m: usize, n: usize, seed: u64) -> Result<VgSet, CoreError> {
    if m < 4 {
        return Err(CoreError::InvalidArgument("packing weight must be >= 4".into()));
    }
    if n <= m {
        return Err(CoreError::InvalidArgument(
            "packing length must exceed the weight".into(),
        ));
    }
    let (_, target) = packing_target(m, n);
    let mut best: Vec<Vec<u32>> = Vec::new();
    for restart in 0..64u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(restart));
        let mut accepted: Vec<Vec<u32>> = Vec::new();
        let draws = 400 * target + 4000;
        for _ in 0..draws {
            // sample a random m-subset of 0..n
            let mut support: Vec<u32> = Vec::with_capacity(m);
            while support.len() < m {
                let candidate = rng.gen_range(0..n as u32);
                if !support.contains(&candidate) {
                    support.push(candidate);
                }
            }
            support.sort_unstable();
            if accepted
                .iter()
                .all(|v| 2 * hamming_supports(v, &support) >= m)
            {
                accepted.push(support);
                if accepted.len() >= target {
                    break;
                }
            }
        }
        if accepted.len() > best.len() {
            best = accepted;
        }
        if best.len() >= target {
            break;
        }
    }
    let certificate = verify_packing(&best, m, n);
    if !certificate.pass {
        return Err(CoreError::SearchFailed(alloc::format!(
            "packing of {} vectors (target {target}) with min distance {} after 64 restarts",
            certificate.cardinality,
            certificate.min_distance
        )));
    }
    Ok(VgSet {
        n,
        m,
        vectors: best,
        certificate,
    })
}

/// Tunable constants of the lower-bound construction. `None` means the value
/// is derived from the bump profile at build time.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LowerBoundConstants {
    /// Class-membership safety factor (the amplitude obeys
    /// A sigma^{-beta_l} (m prod sigma)^{1/r_l} <= L_l / c1_lb).
    pub c1_lb: f64,
    /// Separation constant; default ||g||_p^d / 2.
    pub c2_lb: Option<f64>,
    /// Energy constant; default ||g||_2^{2d}.
    pub c3_lb: Option<f64>,
}

impl Default for LowerBoundConstants {
    fn default() -> Self {
        LowerBoundConstants {
            c1_lb: 4.0,
            c2_lb: None,
            c3_lb: None,
        }
    }
}

/// Final constants after calibration, recorded in the family descriptor.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResolvedConstants {
    pub c1_lb: f64,
    pub c2_lb: f64,
    pub c3_lb: f64,
    /// Geometric shrink factor applied to the recipe amplitude until the
    /// membership and likelihood-ratio conditions held.
    pub amplitude_prefactor: f64,
    /// Shrink applied to the width recipe (new zone only).
    pub sigma_prefactor: f64,
}

/// A fully specified bump family: the zone recipe's amplitude and widths
/// after integer rounding and calibration, the index-set packing, and the
/// claimed pairwise separation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BumpFamily {
    pub spec: ClassSpec,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::float"))]
    pub p: f64,
    pub eps: f64,
    /// Domain half-width the family is built for (>= 1 so the bump row fits).
    pub b: f64,
    pub zone: Zone,
    /// Calibrated amplitude.
    pub amplitude: f64,
    /// Sparsity: maximal number of active bumps.
    pub m: usize,
    /// Bump half-widths per axis, equal to 1/M_l after rounding.
    pub sigma: Vec<f64>,
    /// Bumps per axis.
    pub m_counts: Vec<usize>,
    /// Nonzero patterns (sorted supports over the flattened bump index set);
    /// the zero pattern is an implicit member of the family.
    pub patterns: Vec<Vec<u32>>,
    /// Claimed separation: distinct members are 2 rho apart in L_p.
    pub rho: f64,
    pub constants: ResolvedConstants,
    pub certificate: VgCertificate,
}

impl BumpFamily {
    /// Total number of bump sites.
    pub fn site_count(&self) -> usize {
        self.m_counts.iter().product()
    }

    /// Center of bump j (zero-based) along axis l.
    pub fn center(&self, j: usize, axis: usize) -> f64 {
        -self.b + (2.0 * j as f64 + 1.0) * self.sigma[axis]
    }

    /// Patterns as 0/1 strings over the site set, zero pattern first.
    pub fn pattern_bitstrings(&self) -> Vec<String> {
        let sites = self.site_count();
        let mut out = Vec::with_capacity(self.patterns.len() + 1);
        out.push(core::iter::repeat('0').take(sites).collect());
        for p in &self.patterns {
            let mut s: Vec<u8> = alloc::vec![b'0'; sites];
            for &i in p {
                s[i as usize] = b'1';
            }
            out.push(String::from_utf8(s).unwrap());
        }
        out
    }

    pub fn contains_pattern(&self, pattern: &[u32]) -> bool {
        pattern.is_empty() || self.patterns.iter().any(|p| p == pattern)
    }
}

fn bump_norm_p(p: f64) -> f64 {
    if p.is_infinite() {
        math::exp(-1.0)
    } else {
        quad::lp_norm(bump, p, -1.0, 1.0)
    }
}

/// Build the family for a class at a noise level, following the zone's
/// recipe; integer rounding keeps site-count/sparsity >= 9 and the amplitude
/// is shrunk geometrically until the membership and likelihood-ratio
/// conditions hold (final constants recorded).
pub fn build_family(
    spec: &ClassSpec,
    p: f64,
    eps: f64,
    b: f64,
    constants: &LowerBoundConstants,
    seed: u64,
) -> Result<BumpFamily, CoreError> {
    if !(eps > 0.0 && eps < math::exp(-1.0)) {
        return Err(CoreError::InvalidArgument(
            "noise level must lie in (0, e^-1)".into(),
        ));
    }
    if b < 1.0 {
        return Err(CoreError::InvalidArgument(
            "bump rows need half-width b >= 1".into(),
        ));
    }
    let d = spec.dim();
    let profile = rates::aggregates(spec, p);
    let zone = profile.zone;
    let beta = profile.beta;
    let l_beta = profile.l_beta;
    let omega = profile.omega;
    let log_eps = math::abs(math::ln(eps));
    let radii = spec.radii();
    let betas = spec.beta();
    let rs = spec.norm_indices();

    // zone recipe: raw amplitude, sparsity and widths (prefactors 1)
    let mut sigma_prefactor = 1.0f64;
    let (raw_amplitude, raw_m, raw_sigma): (f64, f64, Vec<f64>) = match zone {
        Zone::Dense => {
            let phi = math::powf(l_beta * eps * eps, beta / (2.0 * beta + 1.0));
            let amp = phi;
            let m = l_beta / (9.0 * phi);
            let sigma = (0..d)
                .map(|l| math::powf(phi / radii[l], 1.0 / betas[l]))
                .collect();
            (amp, m, sigma)
        }
        Zone::Sparse => {
            let varpi = eps * eps * log_eps;
            let tau2 = spec.tau(2.0);
            let amp = math::powf(l_beta, 1.0 / (2.0 * tau2))
                * math::powf(varpi, (1.0 - spec.inv_omega()) / (2.0 * tau2));
            let sigma = (0..d)
                .map(|l| {
                    let rl = rs[l];
                    let l_exp = if rl.is_finite() {
                        (rl - 2.0) / (2.0 * betas[l] * rl * tau2)
                    } else {
                        1.0 / (2.0 * betas[l] * tau2)
                    };
                    math::powf(radii[l], -1.0 / betas[l])
                        * math::powf(l_beta, l_exp)
                        * math::powf(varpi, spec.tau(rl) / (2.0 * betas[l] * tau2))
                })
                .collect();
            (amp, 4.0, sigma)
        }
        Zone::NewZone | Zone::NoConsistency => {
            let p_star = profile.p_star;
            let kappa_star = spec.kappa(p_star);
            let varpi = if kappa_star == 0.0 {
                l_beta * math::exp(-1.0 / (eps * eps))
            } else {
                // kappa(p*) < 0 here; exponent omega/kappa(p*) <= 0
                math::powf(l_beta * eps * eps * log_eps, omega / kappa_star)
            };
            let tau_star = spec.tau(p_star);
            let m = l_beta * math::powf(varpi, -(p_star * tau_star));
            let sigma: Vec<f64> = (0..d)
                .map(|l| {
                    let rl = rs[l];
                    let exp = if rl.is_finite() && p_star.is_finite() {
                        (rl - p_star) / (betas[l] * rl)
                    } else if rl.is_finite() {
                        // p* infinite: sigma collapses unless varpi = 1
                        f64::NEG_INFINITY
                    } else if p_star.is_finite() {
                        1.0 / betas[l]
                    } else {
                        0.0
                    };
                    math::powf(radii[l], -1.0 / betas[l]) * math::powf(varpi, exp)
                })
                .collect();
            (varpi, m, sigma)
        }
    };

    if !raw_amplitude.is_finite() || raw_sigma.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(CoreError::InvalidArgument(
            "degenerate recipe parameters; the zone may be unreachable at this noise level".into(),
        ));
    }

    // shrink widths (new zone prefactor) until they fit under b/2
    let mut sigma = raw_sigma.clone();
    for _ in 0..60 {
        if sigma.iter().all(|s| *s < b / 2.0) {
            break;
        }
        sigma_prefactor *= 0.5;
        sigma = raw_sigma.iter().map(|s| s * sigma_prefactor).collect();
    }
    if sigma.iter().any(|s| *s >= b / 2.0) {
        return Err(CoreError::InvalidArgument(
            "noise level too large: bump widths exceed half the domain".into(),
        ));
    }

    let m_int = math::floor(raw_m) as i64;
    if m_int < 4 {
        return Err(CoreError::InvalidArgument(alloc::format!(
            "noise level too large: recipe sparsity {raw_m:.2} below the packing minimum 4"
        )));
    }
    let mut m_int = m_int as usize;

    // integer bump counts; grow them if needed so sites >= 9 m
    let mut m_counts: Vec<usize> = sigma.iter().map(|s| math::ceil(1.0 / s) as usize).collect();
    let sites = |counts: &[usize]| counts.iter().product::<usize>();
    if sites(&m_counts) < 9 * m_int {
        let factor = math::powf(
            9.0 * m_int as f64 / sites(&m_counts) as f64,
            1.0 / d as f64,
        );
        for c in &mut m_counts {
            *c = math::ceil(*c as f64 * factor) as usize;
        }
    }
    m_int = m_int.min(sites(&m_counts) / 9).max(4);
    let sigma: Vec<f64> = m_counts.iter().map(|mc| 1.0 / *mc as f64).collect();
    let site_total = sites(&m_counts);

    // packing over the flattened site set
    let packing = vg_set(m_int, site_total, seed)?;

    // calibrate the amplitude: shrink until the membership condition
    // A sigma_l^{-beta_l} (m prod sigma)^{1/r_l} <= L_l / c1_lb and the
    // likelihood-ratio budget A^2 eps^{-2} prod sigma <= rhs hold
    let prod_sigma: f64 = sigma.iter().product();
    let c3_lb = constants.c3_lb.unwrap_or_else(|| {
        let n2 = bump_norm_p(2.0);
        math::powi(n2 * n2, d as i32)
    });
    let lr_rhs = (math::log2(site_total as f64 / m_int as f64 - 1.0) - 2.0) / (2.0 * c3_lb);
    if lr_rhs <= 0.0 {
        return Err(CoreError::InvalidArgument(
            "site/sparsity ratio too small for the likelihood-ratio budget".into(),
        ));
    }
    let mut amplitude_prefactor = 1.0f64;
    let mut amplitude = raw_amplitude;
    let mut calibrated = false;
    for _ in 0..60 {
        let membership_ok = (0..d).all(|l| {
            let weight = if rs[l].is_finite() {
                math::powf(m_int as f64 * prod_sigma, 1.0 / rs[l])
            } else {
                1.0
            };
            amplitude * math::powf(sigma[l], -betas[l]) * weight
                <= radii[l] / constants.c1_lb + 1e-15
        });
        let lr_ok = amplitude * amplitude / (eps * eps) * m_int as f64 * prod_sigma <= lr_rhs;
        if membership_ok && lr_ok {
            calibrated = true;
            break;
        }
        amplitude_prefactor *= 0.5;
        amplitude = raw_amplitude * amplitude_prefactor;
    }
    if !calibrated {
        return Err(CoreError::SearchFailed(
            "amplitude calibration exhausted its budget".into(),
        ));
    }

    let c2_lb = constants
        .c2_lb
        .unwrap_or_else(|| math::powi(bump_norm_p(p), d as i32) / 2.0);
    let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
    let rho = math::powf(2.0, -inv_p)
        * c2_lb
        * amplitude
        * math::powf(m_int as f64 * prod_sigma, inv_p);

    Ok(BumpFamily {
        spec: spec.clone(),
        p,
        eps,
        b,
        zone,
        amplitude,
        m: m_int,
        sigma,
        m_counts,
        patterns: packing.vectors,
        rho,
        constants: ResolvedConstants {
            c1_lb: constants.c1_lb,
            c2_lb,
            c3_lb,
            amplitude_prefactor,
            sigma_prefactor,
        },
        certificate: packing.certificate,
    })
}

/// Evaluate the family member with the given pattern (sorted site indices;
/// empty for the zero member) on a grid.
pub fn render_family_member(
    family: &BumpFamily,
    pattern: &[u32],
    grid: &Grid,
) -> Result<GridFunction, CoreError> {
    if !family.contains_pattern(pattern) {
        return Err(CoreError::InvalidArgument(
            "pattern is not a member of the family".into(),
        ));
    }
    if grid.dim() != family.spec.dim() {
        return Err(CoreError::GridMismatch);
    }
    if (grid.half_width() - family.b).abs() > 1e-12 {
        return Err(CoreError::GridMismatch);
    }
    let d = grid.dim();
    let n = grid.points_per_axis();
    let mut out = GridFunction::zeros(*grid);
    for &site in pattern {
        // unravel the site over the bump lattice (row-major, axis 0 slowest)
        let mut idx = [0usize; crate::grid::MAX_DIM];
        let mut rem = site as usize;
        for axis in (0..d).rev() {
            idx[axis] = rem % family.m_counts[axis];
            rem /= family.m_counts[axis];
        }
        // bounding box of the bump support on the grid, per axis
        let mut lo = [0usize; crate::grid::MAX_DIM];
        let mut hi = [0usize; crate::grid::MAX_DIM];
        for axis in 0..d {
            let c = family.center(idx[axis], axis);
            let s = family.sigma[axis];
            let to_index = |x: f64| -> i64 {
                libm::floor((x + grid.half_width()) / grid.cell_width()) as i64
            };
            lo[axis] = to_index(c - s).max(0) as usize;
            hi[axis] = (to_index(c + s) + 1).clamp(0, n as i64 - 1) as usize;
        }
        // iterate the box
        let mut cursor = lo;
        'cells: loop {
            let mut value = family.amplitude;
            for axis in 0..d {
                let x = grid.coord(cursor[axis]);
                let c = family.center(idx[axis], axis);
                value *= bump((x - c) / family.sigma[axis]);
                if value == 0.0 {
                    break;
                }
            }
            if value != 0.0 {
                let flat = grid.ravel(&cursor[..d]);
                out.values_mut()[flat] += value;
            }
            // advance
            let mut axis = d;
            loop {
                if axis == 0 {
                    break 'cells;
                }
                axis -= 1;
                cursor[axis] += 1;
                if cursor[axis] <= hi[axis] {
                    break;
                }
                cursor[axis] = lo[axis];
            }
        }
    }
    Ok(out)
}
