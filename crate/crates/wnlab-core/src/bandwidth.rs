//! The bandwidth lattice {e^{-s-2}, s in N}, constant and piecewise-constant
//! bandwidth fields on dyadic partitions, their complexity and integrability
//! classes, and the oracle bandwidth grids driving the adaptive upper bound.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::grid::{Grid, MAX_DIM};
use crate::math;
use crate::nikolskii::ClassSpec;
use crate::rates;

/// Bandwidth lattice value at level s: e^{-s-2}.
pub fn h_of(s: u32) -> f64 {
    math::exp(-(s as f64) - 2.0)
}

/// Smallest lattice level s with h_s <= h (clamped at 0 for h >= e^{-2}).
pub fn level_floor(h: f64) -> u32 {
    assert!(h > 0.0);
    let raw = -math::ln(h) - 2.0;
    if raw <= 0.0 {
        0
    } else {
        math::ceil(raw - 1e-12) as u32
    }
}

/// A d-tuple of lattice levels; larger level means smaller bandwidth.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BandwidthVector {
    levels: Vec<u32>,
}

impl BandwidthVector {
    pub fn new(levels: Vec<u32>) -> Self {
        assert!(!levels.is_empty());
        BandwidthVector { levels }
    }

    /// Same level on every axis.
    pub fn constant(d: usize, level: u32) -> Self {
        BandwidthVector::new(alloc::vec![level; d])
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn value(&self, axis: usize) -> f64 {
        h_of(self.levels[axis])
    }

    pub fn values(&self) -> Vec<f64> {
        self.levels.iter().map(|s| h_of(*s)).collect()
    }

    /// V_h = prod of the component bandwidths.
    pub fn volume(&self) -> f64 {
        self.levels.iter().map(|s| h_of(*s)).product()
    }

    /// Coordinatewise maximum of bandwidths = minimum of levels.
    pub fn join(&self, other: &BandwidthVector) -> BandwidthVector {
        debug_assert_eq!(self.dim(), other.dim());
        BandwidthVector::new(
            self.levels
                .iter()
                .zip(&other.levels)
                .map(|(a, b)| *a.min(b))
                .collect(),
        )
    }

    /// Sum of levels; the tie-breaking key of the selection rule.
    pub fn total_level(&self) -> u64 {
        self.levels.iter().map(|s| *s as u64).sum()
    }
}

/// The dyadic partition of (-b-1, b+1)^d at a given level: 2^level cells per
/// axis with breakpoints -(b+1) + (b+1) k 2^{1-level}.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DyadicPartition {
    d: usize,
    b: f64,
    level: u32,
}

impl DyadicPartition {
    pub fn new(d: usize, b: f64, level: u32) -> Result<Self, CoreError> {
        if d == 0 || d > MAX_DIM {
            return Err(CoreError::InvalidArgument(format!(
                "partition dimension {d} outside 1..={MAX_DIM}"
            )));
        }
        if !(b > 0.0) {
            return Err(CoreError::InvalidArgument("half-width must be positive".into()));
        }
        if level as usize * d > 20 {
            return Err(CoreError::InvalidArgument(format!(
                "partition level {level} in dimension {d} exceeds the cell budget"
            )));
        }
        Ok(DyadicPartition { d, b, level })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn half_width(&self) -> f64 {
        self.b
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn cells_per_axis(&self) -> usize {
        1usize << self.level
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_axis().pow(self.d as u32)
    }

    /// Width of one cell along an axis: 2(b+1)/2^level.
    pub fn axis_width(&self) -> f64 {
        2.0 * (self.b + 1.0) / self.cells_per_axis() as f64
    }

    /// Axis-cell index containing coordinate x (boundary points go left of
    /// the midpoint and right above it never land exactly on grid midpoints).
    pub fn axis_cell_of(&self, x: f64) -> usize {
        let w = self.axis_width();
        let raw = math::floor((x + self.b + 1.0) / w) as i64;
        raw.clamp(0, self.cells_per_axis() as i64 - 1) as usize
    }

    /// Bounds (lo, hi) of an axis cell.
    pub fn axis_bounds(&self, k: usize) -> (f64, f64) {
        let w = self.axis_width();
        let lo = -(self.b + 1.0) + w * k as f64;
        (lo, lo + w)
    }

    /// Flat cell index for a point (row-major, axis 0 slowest).
    pub fn cell_of_point(&self, x: &[f64]) -> usize {
        debug_assert_eq!(x.len(), self.d);
        let n = self.cells_per_axis();
        let mut flat = 0usize;
        for &xi in x {
            flat = flat * n + self.axis_cell_of(xi);
        }
        flat
    }

    pub fn unravel(&self, flat: usize) -> [usize; MAX_DIM] {
        let n = self.cells_per_axis();
        let mut idx = [0usize; MAX_DIM];
        let mut rem = flat;
        for axis in (0..self.d).rev() {
            idx[axis] = rem % n;
            rem /= n;
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        let n = self.cells_per_axis();
        let mut flat = 0usize;
        for axis in 0..self.d {
            flat = flat * n + idx[axis];
        }
        flat
    }

    /// Lebesgue measure of cell ∩ (-hw, hw)^d.
    pub fn overlap_volume(&self, flat: usize, hw: f64) -> f64 {
        let idx = self.unravel(flat);
        let mut vol = 1.0;
        for axis in 0..self.d {
            let (lo, hi) = self.axis_bounds(idx[axis]);
            let len = (hi.min(hw) - lo.max(-hw)).max(0.0);
            vol *= len;
        }
        vol
    }
}

/// Parameters of the bandwidth complexity and integrability classes.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComplexityParams {
    /// Exponent of the level-set measures, in (0, 1).
    pub kappa: f64,
    /// Complexity budget.
    pub budget: f64,
    /// Integrability threshold, at least e^d.
    pub integrability: f64,
}

impl ComplexityParams {
    pub fn new(kappa: f64, budget: f64, integrability: f64, d: usize) -> Result<Self, CoreError> {
        if !(0.0 < kappa && kappa < 1.0) {
            return Err(CoreError::InvalidArgument("kappa must lie in (0,1)".into()));
        }
        if !(budget > 0.0) {
            return Err(CoreError::InvalidArgument("budget must be positive".into()));
        }
        let floor = math::exp(d as f64);
        if integrability < floor {
            return Err(CoreError::InvalidArgument(format!(
                "integrability threshold below e^{d}"
            )));
        }
        Ok(ComplexityParams {
            kappa,
            budget,
            integrability,
        })
    }
}

/// A bandwidth field: piecewise constant on a dyadic partition, values in the
/// lattice. A constant field is the level-0 special case.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BandwidthField {
    grid: Grid,
    partition: DyadicPartition,
    cell_levels: Vec<BandwidthVector>,
}

impl BandwidthField {
    /// A constant field with the given level tuple.
    pub fn constant(grid: Grid, levels: BandwidthVector) -> Result<Self, CoreError> {
        if levels.dim() != grid.dim() {
            return Err(CoreError::InvalidArgument(
                "level tuple dimension does not match the grid".into(),
            ));
        }
        let partition = DyadicPartition::new(grid.dim(), grid.half_width(), 0)?;
        Ok(BandwidthField {
            grid,
            partition,
            cell_levels: alloc::vec![levels],
        })
    }

    /// A field given by one level tuple per partition cell (row-major cell
    /// order).
    pub fn from_cells(
        grid: Grid,
        level: u32,
        cell_levels: Vec<BandwidthVector>,
    ) -> Result<Self, CoreError> {
        let partition = DyadicPartition::new(grid.dim(), grid.half_width(), level)?;
        if cell_levels.len() != partition.cell_count() {
            return Err(CoreError::InvalidArgument(format!(
                "expected {} cell tuples, got {}",
                partition.cell_count(),
                cell_levels.len()
            )));
        }
        if cell_levels.iter().any(|v| v.dim() != grid.dim()) {
            return Err(CoreError::InvalidArgument(
                "cell tuple dimension does not match the grid".into(),
            ));
        }
        Ok(BandwidthField {
            grid,
            partition,
            cell_levels,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn partition(&self) -> &DyadicPartition {
        &self.partition
    }

    pub fn cell_levels(&self) -> &[BandwidthVector] {
        &self.cell_levels
    }

    /// The single level tuple if the field is constant.
    pub fn as_constant(&self) -> Option<&BandwidthVector> {
        let first = &self.cell_levels[0];
        if self.cell_levels.iter().all(|v| v == first) {
            Some(first)
        } else {
            None
        }
    }

    /// Level tuple at a point of (-b, b)^d.
    pub fn levels_at(&self, x: &[f64]) -> &BandwidthVector {
        &self.cell_levels[self.partition.cell_of_point(x)]
    }

    /// Partition-cell index for every grid point.
    pub fn grid_cell_map(&self) -> Vec<usize> {
        let d = self.grid.dim();
        (0..self.grid.len())
            .map(|flat| {
                let p = self.grid.point(flat);
                self.partition.cell_of_point(&p[..d])
            })
            .collect()
    }

    /// Canonical cache key: partition level followed by all cell levels.
    pub fn key(&self) -> Vec<u32> {
        let mut key = Vec::with_capacity(1 + self.cell_levels.len() * self.grid.dim());
        key.push(self.partition.level());
        for v in &self.cell_levels {
            key.extend_from_slice(v.levels());
        }
        key
    }

    /// Largest level (smallest bandwidth) on each axis over cells that meet
    /// (-b, b)^d; drives resolvability checks.
    pub fn max_levels(&self) -> Vec<u32> {
        let d = self.grid.dim();
        let hw = self.grid.half_width();
        let mut out = alloc::vec![0u32; d];
        for (cell, v) in self.cell_levels.iter().enumerate() {
            if self.partition.overlap_volume(cell, hw) > 0.0 {
                for j in 0..d {
                    out[j] = out[j].max(v.levels()[j]);
                }
            }
        }
        out
    }

    /// Coordinatewise join h ∨ eta (pointwise maximum of bandwidths) on the
    /// common refinement of the two partitions.
    pub fn join(&self, other: &BandwidthField) -> Result<BandwidthField, CoreError> {
        if self.grid != other.grid {
            return Err(CoreError::GridMismatch);
        }
        let level = self.partition.level().max(other.partition.level());
        let partition = DyadicPartition::new(self.grid.dim(), self.grid.half_width(), level)?;
        let d = self.grid.dim();
        let shift_a = level - self.partition.level();
        let shift_b = level - other.partition.level();
        let cell_levels = (0..partition.cell_count())
            .map(|flat| {
                let idx = partition.unravel(flat);
                let mut ia = [0usize; MAX_DIM];
                let mut ib = [0usize; MAX_DIM];
                for axis in 0..d {
                    ia[axis] = idx[axis] >> shift_a;
                    ib[axis] = idx[axis] >> shift_b;
                }
                let va = &self.cell_levels[self.partition.ravel(&ia[..d])];
                let vb = &other.cell_levels[other.partition.ravel(&ib[..d])];
                va.join(vb)
            })
            .collect();
        Ok(BandwidthField {
            grid: self.grid,
            partition,
            cell_levels,
        })
    }

    /// Measures of the level sets: map from level tuple to the Lebesgue
    /// measure of {x in (-b,b)^d : levels(x) = tuple}, exact from cell
    /// overlap volumes.
    pub fn level_set_measures(&self) -> BTreeMap<Vec<u32>, f64> {
        let hw = self.grid.half_width();
        let mut map: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (cell, v) in self.cell_levels.iter().enumerate() {
            let vol = self.partition.overlap_volume(cell, hw);
            if vol > 0.0 {
                *map.entry(v.levels().to_vec()).or_insert(0.0) += vol;
            }
        }
        map
    }

    /// Σ over occupied level tuples of measure^kappa.
    pub fn complexity(&self, kappa: f64) -> f64 {
        assert!((0.0..1.0).contains(&kappa) && kappa > 0.0);
        self.level_set_measures()
            .values()
            .map(|m| math::powf(*m, kappa))
            .sum()
    }

    /// Membership in the complexity class with the given budget.
    pub fn member_hd(&self, kappa: f64, budget: f64) -> bool {
        self.complexity(kappa) <= budget
    }

    /// ||V_h^{-1/2}||_q over (-b,b)^d, exact from cell measures. q may be
    /// infinite.
    pub fn vh_inv_sqrt_norm(&self, q: f64) -> f64 {
        assert!(q >= 1.0);
        let hw = self.grid.half_width();
        if q.is_infinite() {
            let mut best = 0.0f64;
            for (cell, v) in self.cell_levels.iter().enumerate() {
                if self.partition.overlap_volume(cell, hw) > 0.0 {
                    best = best.max(math::powf(v.volume(), -0.5));
                }
            }
            return best;
        }
        let mut acc = 0.0;
        for (cell, v) in self.cell_levels.iter().enumerate() {
            let m = self.partition.overlap_volume(cell, hw);
            if m > 0.0 {
                acc += m * math::powf(v.volume(), -0.5 * q);
            }
        }
        math::powf(acc, 1.0 / q)
    }

    /// Smallest norm index r in {floor(p)+1, ...} (up to `cap`) such that
    /// ||V_h^{-1/2}||_{rp/(r-p)} stays within the integrability threshold.
    /// `ok = false` when no index under the cap qualifies.
    pub fn norm_index_set(&self, integrability: f64, p: f64, cap: u32) -> (u32, bool) {
        let start = math::floor(p) as u32 + 1;
        for r in start..=cap {
            let q = r as f64 * p / (r as f64 - p);
            if self.vh_inv_sqrt_norm(q) <= integrability {
                return (r, true);
            }
        }
        (cap, false)
    }
}

/// Caps applied when materializing the countable oracle grids.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleGridCaps {
    /// Largest admitted lattice level.
    pub level_cap: u32,
    /// Hard cap on the number of returned vectors.
    pub max_vectors: usize,
    /// Stop once every component falls below this width (grid cell width in
    /// experiments); None disables the check.
    pub resolution_floor: Option<f64>,
    /// Kernel order entering the truncation index in the dense regime;
    /// defaults to floor(max beta_j) + 1.
    pub ell: Option<u32>,
}

impl Default for OracleGridCaps {
    fn default() -> Self {
        OracleGridCaps {
            level_cap: 40,
            max_vectors: 10_000,
            resolution_floor: None,
            ell: None,
        }
    }
}

/// One rung of the oracle grid: the raw bandwidths before projection and the
/// projected lattice levels.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleStep {
    pub m: u32,
    pub eta_bar: Vec<f64>,
    pub levels: BandwidthVector,
}

/// The oracle bandwidth sequence for a class: geometric rungs whose volumes
/// contract by e^{-4d} per step, with the sparse-zone switch between the two
/// rung families, each rung projected onto the lattice from below.
pub fn oracle_bandwidth_steps(
    spec: &ClassSpec,
    p: f64,
    eps: f64,
    caps: &OracleGridCaps,
) -> Result<Vec<OracleStep>, CoreError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(CoreError::InvalidArgument("eps must lie in (0,1)".into()));
    }
    let profile = rates::aggregates(spec, p);
    if !profile.consistent {
        return Err(CoreError::ZoneMismatch(
            "oracle grid undefined outside the consistency region".into(),
        ));
    }
    let d = spec.dim() as f64;
    let kappa_p = spec.kappa(p);
    let p_star = profile.p_star;
    let tau_star = spec.tau(p_star);
    let beta = profile.beta;
    let l_beta = profile.l_beta;
    let omega = profile.omega;
    let inv_beta = spec.inv_beta();

    let log_eps = math::abs(math::ln(eps));
    let phi = if kappa_p > 0.0 {
        math::powf(l_beta * eps * eps, beta / (2.0 * beta + 1.0))
    } else {
        math::powf(l_beta * eps * eps * log_eps, beta / (2.0 * beta + 1.0))
    };

    // growth exponent of the primary rung family on each axis
    let omega_infinite = spec.inv_omega() == 0.0;
    let tilde_weight: Vec<f64> = (0..spec.dim())
        .map(|j| {
            let bj = spec.beta()[j];
            let rj = spec.norm_indices()[j];
            if omega_infinite {
                // symmetric limit of omega(2 + 1/beta)/(beta_j r_j)
                -2.0 * beta / bj
            } else if rj.is_finite() {
                1.0 / bj - omega * (2.0 + inv_beta) / (bj * rj)
            } else {
                1.0 / bj
            }
        })
        .collect();

    let eta_tilde = |m: f64, j: usize| -> f64 {
        let bj = spec.beta()[j];
        math::exp(-2.0)
            * math::powf(phi / spec.radii()[j], 1.0 / bj)
            * math::exp(2.0 * d * m * tilde_weight[j])
    };

    let sparse = kappa_p <= 0.0 && tau_star > 0.0;

    // secondary rung family and the switch index, sparse zone only
    let (m_hat, eta_hat): (u32, Option<alloc::boxed::Box<dyn Fn(f64, usize) -> f64>>) = if sparse {
        let gamma_total = profile.gamma_total;
        let upsilon = profile.upsilon;
        let l_gamma = profile.l_gamma;
        let inv_gap = 1.0 / gamma_total - 1.0 / beta;
        let x_hat = if math::abs(inv_gap) < 1e-12 || l_gamma == l_beta {
            math::powf(1.0 / phi, 1.0 / (2.0 * beta * omega * spec.tau(2.0)))
        } else {
            math::powf(
                math::powf(l_gamma / l_beta, 1.0 / inv_gap) / phi,
                1.0 / (2.0 * beta * omega * spec.tau(2.0)),
            )
        };
        let m_hat = (math::floor(math::ln(x_hat) / (2.0 * d)).max(0.0)) as u32;
        let gamma = profile.gamma.clone();
        let q = profile.q.clone();
        let radii: Vec<f64> = spec.radii().to_vec();
        let bracket = l_gamma * math::powf(phi, spec.inv_beta())
            / (l_beta * math::powf(phi, 1.0 / gamma_total));
        let inv_gamma_total = 1.0 / gamma_total;
        let dd = d;
        let hat = move |m: f64, j: usize| -> f64 {
            let gj = gamma[j];
            let weight = if q[j].is_finite() {
                1.0 / gj - upsilon * (2.0 + inv_gamma_total) / (gj * q[j])
            } else {
                1.0 / gj
            };
            math::exp(-2.0)
                * math::powf(phi / radii[j], 1.0 / gj)
                * math::exp(2.0 * dd * m * weight)
                * math::powf(
                    bracket,
                    if q[j].is_finite() {
                        upsilon / (gj * q[j])
                    } else {
                        0.0
                    },
                )
        };
        (m_hat, Some(alloc::boxed::Box::new(hat)))
    } else {
        (0, None)
    };

    // truncation index
    let l_min = spec.radii().iter().fold(f64::INFINITY, |a, l| a.min(*l));
    let p_star_over_kappa_star = if p_star.is_infinite() {
        if omega_infinite {
            // limit along r_j = r -> inf of p*/kappa(p*) = 1/(2 beta)
            Some(1.0 / (2.0 * beta))
        } else {
            // kappa(s) = omega(2+1/beta) - s: ratio tends to -1
            Some(-1.0)
        }
    } else {
        let kappa_star = spec.kappa(p_star);
        if kappa_star == 0.0 {
            None
        } else {
            Some(p_star / kappa_star)
        }
    };
    let m_tilde: Option<u32> = if kappa_p > 0.0 {
        let kappa_star_nonneg = if p_star.is_infinite() {
            omega_infinite
        } else {
            spec.kappa(p_star) >= 0.0
        };
        if kappa_star_nonneg && omega_infinite && p_star.is_infinite() {
            // all-Hoelder dense case: finite truncation via the limit ratio
            let h_eps = math::exp(-math::sqrt(log_eps));
            let ell = caps
                .ell
                .unwrap_or_else(|| spec.beta().iter().fold(0.0f64, |a, b| a.max(*b)) as u32 + 1);
            let base = math::powf(h_eps, -(ell as f64)) * phi / l_min;
            let ratio = p_star_over_kappa_star.unwrap_or(1.0);
            let x = math::powf(base, ratio);
            Some(floor_index(x, d)?)
        } else if kappa_star_nonneg {
            None // infinite grid, bounded by the caps below
        } else {
            let h_eps = math::exp(-math::sqrt(log_eps));
            let ell = caps
                .ell
                .unwrap_or_else(|| spec.beta().iter().fold(0.0f64, |a, b| a.max(*b)) as u32 + 1);
            let base = math::powf(h_eps, -(ell as f64)) * phi / l_min;
            let x = math::powf(base, p_star_over_kappa_star.unwrap());
            Some(floor_index(x, d)?)
        }
    } else if tau_star <= 0.0 {
        let x = math::powf(phi / l_min, p_star_over_kappa_star.unwrap_or(-1.0));
        Some(floor_index(x, d)?)
    } else if p_star == p {
        Some(m_hat + 1)
    } else {
        let gamma_total = profile.gamma_total;
        let upsilon = profile.upsilon;
        let inv_p_star = if p_star.is_infinite() { 0.0 } else { 1.0 / p_star };
        let gap = upsilon * (1.0 / p - inv_p_star);
        let exponent = -(1.0 + (1.0 / gamma_total - 1.0 / beta) * gap)
            / ((2.0 + 1.0 / gamma_total) * gap);
        let x = math::powf(phi, exponent);
        Some(m_hat + floor_index(x, d)?)
    };

    let mut steps: Vec<OracleStep> = Vec::new();
    let mut m = 0u32;
    loop {
        if let Some(cap) = m_tilde {
            if m > cap {
                break;
            }
        }
        if steps.len() >= caps.max_vectors {
            break;
        }
        let eta_bar: Vec<f64> = (0..spec.dim())
            .map(|j| {
                if sparse && m > m_hat {
                    (eta_hat.as_ref().unwrap())(m as f64, j)
                } else {
                    eta_tilde(m as f64, j)
                }
            })
            .collect();
        if let Some(floor_width) = caps.resolution_floor {
            if eta_bar.iter().all(|h| *h < floor_width) {
                break;
            }
        }
        let levels: Vec<u32> = eta_bar.iter().map(|h| level_floor(*h)).collect();
        if levels.iter().any(|s| *s > caps.level_cap) {
            break;
        }
        let vector = BandwidthVector::new(levels);
        if !steps.iter().any(|s| s.levels == vector) {
            steps.push(OracleStep {
                m,
                eta_bar,
                levels: vector,
            });
        }
        m += 1;
        if m > 1_000_000 {
            break;
        }
    }
    if steps.is_empty() {
        return Err(CoreError::InvalidArgument(
            "noise level too large: oracle bandwidth grid is empty".into(),
        ));
    }
    Ok(steps)
}

fn floor_index(x: f64, d: f64) -> Result<u32, CoreError> {
    if !(x > 0.0) || x.is_nan() {
        return Err(CoreError::InvalidArgument(
            "degenerate truncation index in the oracle grid".into(),
        ));
    }
    let raw = math::floor(math::ln(x) / (2.0 * d));
    if raw < 0.0 {
        return Err(CoreError::InvalidArgument(
            "noise level too large: oracle bandwidth grid is empty".into(),
        ));
    }
    Ok(raw.min(1e9) as u32)
}

/// The distinct projected level tuples of the oracle grid.
pub fn oracle_bandwidth_grid(
    spec: &ClassSpec,
    p: f64,
    eps: f64,
    caps: &OracleGridCaps,
) -> Result<Vec<BandwidthVector>, CoreError> {
    Ok(oracle_bandwidth_steps(spec, p, eps, caps)?
        .into_iter()
        .map(|s| s.levels)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn lattice_values() {
        assert!((h_of(0) - 0.1353352832366127).abs() < 1e-15);
        assert!((h_of(3) - 0.006737946999085467).abs() < 1e-15);
        for s in 0..10 {
            assert!((h_of(s + 1) / h_of(s) - (-1.0f64).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn level_floor_inverse() {
        for s in 0..30u32 {
            assert_eq!(level_floor(h_of(s)), s);
            assert_eq!(level_floor(h_of(s) * 1.01), s);
        }
        assert_eq!(level_floor(1.0), 0);
    }

    #[test]
    fn partition_level1_bounds() {
        let p = DyadicPartition::new(1, 1.0, 1).unwrap();
        assert_eq!(p.cell_count(), 2);
        let (lo0, hi0) = p.axis_bounds(0);
        let (lo1, hi1) = p.axis_bounds(1);
        assert_eq!((lo0, hi0), (-2.0, 0.0));
        assert_eq!((lo1, hi1), (0.0, 2.0));
    }

    #[test]
    fn partition_cover_and_disjoint() {
        let p = DyadicPartition::new(1, 1.0, 3).unwrap();
        let mut total = 0.0;
        for k in 0..p.cells_per_axis() {
            let (lo, hi) = p.axis_bounds(k);
            assert!(hi > lo);
            if k > 0 {
                let (_, prev_hi) = p.axis_bounds(k - 1);
                assert!((prev_hi - lo).abs() < 1e-12);
            }
            total += hi - lo;
        }
        assert!((total - 4.0).abs() < 1e-12);
    }

    #[test]
    fn dyadic_nesting() {
        let coarse = DyadicPartition::new(2, 1.0, 1).unwrap();
        let fine = DyadicPartition::new(2, 1.0, 2).unwrap();
        // every fine cell's center maps into the parent with index >> 1
        for flat in 0..fine.cell_count() {
            let idx = fine.unravel(flat);
            let centers: alloc::vec::Vec<f64> = (0..2)
                .map(|axis| {
                    let (lo, hi) = fine.axis_bounds(idx[axis]);
                    0.5 * (lo + hi)
                })
                .collect();
            let parent = coarse.cell_of_point(&centers);
            let pidx = coarse.unravel(parent);
            assert_eq!(pidx[0], idx[0] >> 1);
            assert_eq!(pidx[1], idx[1] >> 1);
        }
    }

    #[test]
    fn join_constant_fields() {
        let g = Grid::new(1, 1.0, 16).unwrap();
        let h = BandwidthField::constant(g, BandwidthVector::constant(1, 2)).unwrap();
        let eta = BandwidthField::constant(g, BandwidthVector::constant(1, 5)).unwrap();
        let j = h.join(&eta).unwrap();
        assert_eq!(j.as_constant().unwrap().levels(), &[2]);
        let jj = h.join(&h).unwrap();
        assert_eq!(jj.as_constant().unwrap().levels(), &[2]);
    }

    #[test]
    fn join_coordinatewise() {
        let g = Grid::new(2, 1.0, 8).unwrap();
        let h = BandwidthField::constant(g, BandwidthVector::new(alloc::vec![1, 4])).unwrap();
        let eta = BandwidthField::constant(g, BandwidthVector::new(alloc::vec![3, 2])).unwrap();
        let j = h.join(&eta).unwrap();
        assert_eq!(j.as_constant().unwrap().levels(), &[1, 2]);
    }

    #[test]
    fn join_volume_dominates() {
        let g = Grid::new(1, 1.0, 16).unwrap();
        let h = BandwidthField::from_cells(
            g,
            1,
            alloc::vec![
                BandwidthVector::constant(1, 1),
                BandwidthVector::constant(1, 4)
            ],
        )
        .unwrap();
        let eta = BandwidthField::constant(g, BandwidthVector::constant(1, 3)).unwrap();
        let j = h.join(&eta).unwrap();
        for flat in 0..g.len() {
            let p = g.point(flat);
            let vj = j.levels_at(&p[..1]).volume();
            let vh = h.levels_at(&p[..1]).volume();
            let ve = eta.levels_at(&p[..1]).volume();
            assert!(vj >= vh.max(ve) - 1e-15);
        }
    }

    #[test]
    fn complexity_constant_field() {
        let g = Grid::new(1, 1.0, 16).unwrap();
        let h = BandwidthField::constant(g, BandwidthVector::constant(1, 3)).unwrap();
        // single level set of measure 2b = 2
        assert!((h.complexity(0.5) - 2.0f64.sqrt()).abs() < 1e-12);
        let g2 = Grid::new(2, 1.0, 8).unwrap();
        let h2 = BandwidthField::constant(g2, BandwidthVector::constant(2, 1)).unwrap();
        assert!((h2.complexity(0.5) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn complexity_two_level_split() {
        let g = Grid::new(1, 1.0, 16).unwrap();
        let h = BandwidthField::from_cells(
            g,
            1,
            alloc::vec![
                BandwidthVector::constant(1, 2),
                BandwidthVector::constant(1, 5)
            ],
        )
        .unwrap();
        // two level sets of measure 1 each
        assert!((h.complexity(0.5) - 2.0).abs() < 1e-12);
        assert!(!h.member_hd(0.5, 1.5));
        assert!(h.member_hd(0.5, 1e9));
    }

    #[test]
    fn refinement_preserves_complexity() {
        let g = Grid::new(1, 1.0, 16).unwrap();
        let coarse = BandwidthField::constant(g, BandwidthVector::constant(1, 2)).unwrap();
        let fine = BandwidthField::from_cells(
            g,
            2,
            alloc::vec![BandwidthVector::constant(1, 2); 4],
        )
        .unwrap();
        assert!((coarse.complexity(0.3) - fine.complexity(0.3)).abs() < 1e-12);
    }

    #[test]
    fn constant_field_in_hd_with_measure_budget() {
        // constant fields always satisfy the bound with budget (2b)^kappa
        let g = Grid::new(2, 1.0, 8).unwrap();
        for level in 0..4 {
            let h = BandwidthField::constant(g, BandwidthVector::constant(2, level)).unwrap();
            let kappa = 0.25;
            let budget = (4.0f64).powf(kappa); // (2b)^d = 4 in d = 2
            assert!(h.member_hd(kappa, budget + 1e-12));
        }
    }

    #[test]
    fn norm_index_set_closed_form() {
        let g = Grid::new(1, 1.0, 16).unwrap();
        let h = BandwidthField::constant(g, BandwidthVector::constant(1, 2)).unwrap();
        // V = e^{-4}; r = 3, q = 6: norm = e^2 2^{1/6}
        let q = 6.0;
        let expect = (2.0f64).powf(1.0 / q) * (2.0f64).exp();
        assert!((h.vh_inv_sqrt_norm(q) - expect).abs() < 1e-10);
        let (r, ok) = h.norm_index_set(9.0, 2.0, 64);
        assert!(ok);
        assert_eq!(r, 3);
    }

    #[test]
    fn norm_index_set_unreachable_threshold() {
        let g = Grid::new(1, 1.0, 16).unwrap();
        let h = BandwidthField::constant(g, BandwidthVector::constant(1, 2)).unwrap();
        // threshold below V^{-1/2} * min_r (2b)^{1/q}: unreachable
        let v_inv_sqrt = (2.0f64).exp();
        let (_, ok) = h.norm_index_set(0.9 * v_inv_sqrt, 2.0, 64);
        assert!(!ok);
    }

    #[test]
    fn oracle_grid_dense_example() {
        // d=1, beta=2, r=inf, L=1, p=2, eps=0.01: eta(0) ~ 0.021450, s(0)=2
        let spec = ClassSpec::new(
            alloc::vec![2.0],
            alloc::vec![f64::INFINITY],
            alloc::vec![1.0],
        )
        .unwrap();
        let steps = oracle_bandwidth_steps(&spec, 2.0, 0.01, &OracleGridCaps::default()).unwrap();
        assert!((steps[0].eta_bar[0] - 0.021450).abs() < 1e-5);
        assert_eq!(steps[0].levels.levels(), &[2]);
    }

    #[test]
    fn oracle_grid_volume_relation() {
        // prod eta_bar_j(m) = e^{-2d} L_beta^{-1} phi^{1/beta} e^{-4dm}
        let spec = ClassSpec::new(
            alloc::vec![2.0, 1.0],
            alloc::vec![4.0, 6.0],
            alloc::vec![1.5, 0.7],
        )
        .unwrap();
        let p = 2.0;
        let eps = 0.01;
        let steps = oracle_bandwidth_steps(&spec, p, eps, &OracleGridCaps::default()).unwrap();
        let prof = rates::aggregates(&spec, p);
        let log_eps = (1.0f64 / eps).ln();
        let phi = if spec.kappa(p) > 0.0 {
            (prof.l_beta * eps * eps).powf(prof.beta / (2.0 * prof.beta + 1.0))
        } else {
            (prof.l_beta * eps * eps * log_eps).powf(prof.beta / (2.0 * prof.beta + 1.0))
        };
        let d = 2.0f64;
        for step in &steps {
            let vol: f64 = step.eta_bar.iter().product();
            let expect = (-2.0f64 * d).exp() / prof.l_beta
                * phi.powf(1.0 / prof.beta)
                * (-4.0 * d * step.m as f64).exp();
            assert!(
                (vol - expect).abs() <= 1e-12 * expect.max(1e-300),
                "m={}: {vol} vs {expect}",
                step.m
            );
        }
    }

    #[test]
    fn oracle_grid_levels_distinct() {
        let spec = ClassSpec::new(
            alloc::vec![2.0, 1.0],
            alloc::vec![4.0, 6.0],
            alloc::vec![1.0, 1.0],
        )
        .unwrap();
        let grid = oracle_bandwidth_grid(&spec, 2.0, 0.005, &OracleGridCaps::default()).unwrap();
        for i in 0..grid.len() {
            for j in 0..i {
                assert_ne!(grid[i], grid[j], "duplicate levels at {i},{j}");
            }
        }
    }

    #[test]
    fn oracle_grid_projection_sandwich() {
        let spec = ClassSpec::new(
            alloc::vec![2.0],
            alloc::vec![f64::INFINITY],
            alloc::vec![1.0],
        )
        .unwrap();
        let steps = oracle_bandwidth_steps(&spec, 2.0, 0.01, &OracleGridCaps::default()).unwrap();
        for step in &steps {
            for (j, &eta) in step.eta_bar.iter().enumerate() {
                let hs = h_of(step.levels.levels()[j]);
                assert!(hs <= eta * (1.0 + 1e-12), "m={}", step.m);
                assert!(eta < core::f64::consts::E * hs * (1.0 + 1e-12), "m={}", step.m);
            }
        }
    }

    #[test]
    fn oracle_grid_rejects_inconsistent_class() {
        let spec = ClassSpec::isotropic(1, 0.5, 1.0, 1.0).unwrap();
        assert!(matches!(
            oracle_bandwidth_grid(&spec, 2.0, 0.01, &OracleGridCaps::default()),
            Err(CoreError::ZoneMismatch(_))
        ));
    }
}
