//! Anisotropic Nikolskii class machinery: finite-difference operators,
//! membership verification on grids, the embedding map between classes, and
//! the strong maximal operator diagnostic.
//!
//! A class is parametrized per axis by a smoothness exponent beta_j, a norm
//! index r_j in [1, inf] and a radius L_j; membership asks that the k_j-th
//! order differences along axis j scale like L_j |u|^{beta_j} in L_{r_j}.

use alloc::format;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::grid::GridFunction;
use crate::math;

/// Parameters of an anisotropic Nikolskii class.
///
/// Holds the per-axis smoothness, norm indices (infinity allowed) and radii,
/// plus the derived difference orders k_j = floor(beta_j) + 1 and the scalar
/// aggregates used throughout the rate calculus.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassSpec {
    beta: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::float_vec"))]
    r: Vec<f64>,
    radii: Vec<f64>,
}

impl ClassSpec {
    pub fn new(beta: Vec<f64>, r: Vec<f64>, radii: Vec<f64>) -> Result<Self, CoreError> {
        let d = beta.len();
        if d == 0 || r.len() != d || radii.len() != d {
            return Err(CoreError::InvalidArgument(
                "class parameter vectors must share a positive length".into(),
            ));
        }
        if beta.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(CoreError::InvalidArgument("smoothness must be positive".into()));
        }
        if r.iter().any(|r| !(*r >= 1.0)) {
            return Err(CoreError::InvalidArgument("norm indices must be >= 1".into()));
        }
        if radii.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(CoreError::InvalidArgument("radii must be positive".into()));
        }
        Ok(ClassSpec { beta, r, radii })
    }

    /// Isotropic shorthand: same (beta, r, L) on every axis.
    pub fn isotropic(d: usize, beta: f64, r: f64, radius: f64) -> Result<Self, CoreError> {
        ClassSpec::new(
            alloc::vec![beta; d],
            alloc::vec![r; d],
            alloc::vec![radius; d],
        )
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn norm_indices(&self) -> &[f64] {
        &self.r
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Difference orders k_j = floor(beta_j) + 1, the smallest integers
    /// exceeding the smoothness.
    pub fn difference_orders(&self) -> Vec<u32> {
        self.beta
            .iter()
            .map(|b| math::floor(*b) as u32 + 1)
            .collect()
    }

    /// 1/beta = sum of 1/beta_j.
    pub fn inv_beta(&self) -> f64 {
        self.beta.iter().map(|b| 1.0 / b).sum()
    }

    /// 1/omega = sum of 1/(beta_j r_j); infinite r_j contribute zero.
    pub fn inv_omega(&self) -> f64 {
        self.beta
            .iter()
            .zip(&self.r)
            .map(|(b, r)| if r.is_infinite() { 0.0 } else { 1.0 / (b * r) })
            .sum()
    }

    /// The aggregate beta (harmonic-type mean of the beta_j).
    pub fn beta_total(&self) -> f64 {
        1.0 / self.inv_beta()
    }

    /// The aggregate omega; infinite when every r_j is infinite.
    pub fn omega(&self) -> f64 {
        let io = self.inv_omega();
        if io == 0.0 {
            f64::INFINITY
        } else {
            1.0 / io
        }
    }

    /// L_beta = prod L_j^{1/beta_j}.
    pub fn l_beta(&self) -> f64 {
        self.radii
            .iter()
            .zip(&self.beta)
            .map(|(l, b)| math::powf(*l, 1.0 / b))
            .product()
    }

    /// tau(s) = 1 - 1/omega + 1/(s beta); the 1/(s beta) term vanishes at
    /// s = infinity.
    pub fn tau(&self, s: f64) -> f64 {
        let tail = if s.is_infinite() {
            0.0
        } else {
            self.inv_beta() / s
        };
        1.0 - self.inv_omega() + tail
    }

    /// kappa(s) = omega (2 + 1/beta) - s, with the conventions
    /// kappa(inf) = -inf and kappa = +inf for finite s when omega is
    /// infinite.
    pub fn kappa(&self, s: f64) -> f64 {
        if s.is_infinite() {
            return f64::NEG_INFINITY;
        }
        if self.inv_omega() == 0.0 {
            return f64::INFINITY;
        }
        self.omega() * (2.0 + self.inv_beta()) - s
    }

    /// p* = max_j r_j joined with p.
    pub fn p_star(&self, p: f64) -> f64 {
        let rmax = self.r.iter().fold(1.0f64, |a, r| a.max(*r));
        rmax.max(p)
    }

    /// p_pm = max of the finite r_j joined with p (p itself if none finite).
    pub fn p_pm(&self, p: f64) -> f64 {
        let rmax = self
            .r
            .iter()
            .filter(|r| r.is_finite())
            .fold(1.0f64, |a, r| a.max(*r));
        rmax.max(p)
    }

    /// Axes with finite norm index.
    pub fn finite_axes(&self) -> Vec<usize> {
        (0..self.dim()).filter(|j| self.r[*j].is_finite()).collect()
    }
}

/// k-th order finite difference along one axis:
/// sum_{l=1}^{k} (-1)^{l+k} binom(k,l) [g(x + u l e_j) - g(x)], with zero
/// extension outside the grid.
///
/// `u` must be an integer multiple of the grid step along the axis so the
/// shifted evaluations land on grid points exactly.
pub fn difference(
    g: &GridFunction,
    u: f64,
    axis: usize,
    k: u32,
) -> Result<GridFunction, CoreError> {
    let grid = *g.grid();
    if axis >= grid.dim() {
        return Err(CoreError::InvalidArgument(format!(
            "axis {axis} out of range for dimension {}",
            grid.dim()
        )));
    }
    if k == 0 {
        return Err(CoreError::InvalidArgument("difference order must be >= 1".into()));
    }
    let step = grid.cell_width();
    let shift = u / step;
    let shift_cells = libm::round(shift);
    if math::abs(shift - shift_cells) > 1e-9 * (1.0 + math::abs(shift)) {
        return Err(CoreError::InvalidArgument(format!(
            "step {u} is not grid-aligned (cell width {step})"
        )));
    }
    if math::abs(u) * k as f64 >= 2.0 * grid.half_width() {
        return Err(CoreError::InvalidArgument(format!(
            "total shift {} exceeds the domain diameter",
            math::abs(u) * k as f64
        )));
    }
    let shift_cells = shift_cells as i64;
    let n = grid.points_per_axis() as i64;

    // binomial row binom(k, l) for l = 0..=k
    let mut binom = Vec::with_capacity(k as usize + 1);
    binom.push(1.0f64);
    for l in 1..=k {
        let prev = binom[l as usize - 1];
        binom.push(prev * (k - l + 1) as f64 / l as f64);
    }

    let mut out = GridFunction::zeros(grid);
    let values = g.values();
    let d = grid.dim();
    for flat in 0..grid.len() {
        let idx = grid.unravel(flat);
        let mut acc = 0.0;
        for l in 1..=k {
            let sign = if (l + k) % 2 == 0 { 1.0 } else { -1.0 };
            let target = idx[axis] as i64 + shift_cells * l as i64;
            let shifted = if (0..n).contains(&target) {
                let mut sidx = idx;
                sidx[axis] = target as usize;
                values[grid.ravel(&sidx[..d])]
            } else {
                0.0
            };
            acc += sign * binom[l as usize] * (shifted - values[flat]);
        }
        out.values_mut()[flat] = acc;
    }
    Ok(out)
}

/// Per-axis outcome of a membership check.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AxisCheck {
    /// ||g||_{r_j} on the grid.
    pub norm: f64,
    /// Radius L_j the norm is compared against.
    pub radius: f64,
    /// Worst ratio ||Delta^{k_j}_{u,j} g||_{r_j} / (L_j |u|^{beta_j})
    /// over the probed steps.
    pub worst_ratio: f64,
    /// Step that attained the worst ratio.
    pub worst_u: f64,
}

/// Result of verifying class membership on a grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MembershipReport {
    pub axes: Vec<AxisCheck>,
    pub slack: f64,
    pub pass: bool,
}

/// Steps {cell_width * 2^i} up to an eighth of the domain diameter:
/// spans scales without wrap-around.
pub fn default_u_grid(grid: &crate::grid::Grid) -> Vec<f64> {
    let step = grid.cell_width();
    let cap = 2.0 * grid.half_width() / 8.0;
    let mut us = Vec::new();
    let mut u = step;
    while u <= cap {
        us.push(u);
        u *= 2.0;
    }
    if us.is_empty() {
        us.push(step);
    }
    us
}

/// Evaluate both membership conditions of the class definition on the grid.
///
/// `pass` holds iff every norm is at most L_j (1 + slack) and every
/// difference ratio is at most 1 + slack; the slack absorbs discretization
/// and boundary effects of the zero extension.
pub fn check_membership(
    g: &GridFunction,
    spec: &ClassSpec,
    u_grid: &[f64],
    slack: f64,
) -> Result<MembershipReport, CoreError> {
    let d = g.grid().dim();
    if spec.dim() != d {
        return Err(CoreError::InvalidArgument(format!(
            "class dimension {} does not match grid dimension {d}",
            spec.dim()
        )));
    }
    let orders = spec.difference_orders();
    let mut axes = Vec::with_capacity(d);
    let mut pass = true;
    for j in 0..d {
        let rj = spec.norm_indices()[j];
        let lj = spec.radii()[j];
        let norm = g.lp_norm(rj);
        let mut worst_ratio = 0.0f64;
        let mut worst_u = 0.0f64;
        for &u in u_grid {
            if math::abs(u) * orders[j] as f64 >= 2.0 * g.grid().half_width() {
                continue;
            }
            let diff = difference(g, u, j, orders[j])?;
            let ratio = diff.lp_norm(rj) / (lj * math::powf(math::abs(u), spec.beta()[j]));
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst_u = u;
            }
        }
        if norm > lj * (1.0 + slack) || worst_ratio > 1.0 + slack {
            pass = false;
        }
        axes.push(AxisCheck {
            norm,
            radius: lj,
            worst_ratio,
            worst_u,
        });
    }
    Ok(MembershipReport { axes, slack, pass })
}

/// Output of the class embedding at order s.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Embedding {
    /// Unclamped exponents beta_j tau(s) / tau(r_j).
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::float_vec"))]
    pub gamma_bar: Vec<f64>,
    /// Exponents clamped at beta_j.
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::float_vec"))]
    pub gamma: Vec<f64>,
    /// Norm indices r_j joined with s.
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::float_vec"))]
    pub r_s: Vec<f64>,
    /// max r_j joined with s.
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::float"))]
    pub r_star_s: f64,
    /// The embedding hypothesis tau(r*(s)) > 0.
    pub valid: bool,
}

/// Embed the class into the scale at norm order `s >= 1`.
pub fn embed(spec: &ClassSpec, s: f64) -> Embedding {
    assert!(s >= 1.0);
    let tau_s = spec.tau(s);
    let gamma_bar: Vec<f64> = spec
        .beta()
        .iter()
        .zip(spec.norm_indices())
        .map(|(b, r)| b * tau_s / spec.tau(*r))
        .collect();
    let gamma = gamma_bar
        .iter()
        .zip(spec.beta())
        .map(|(g, b)| g.min(*b))
        .collect();
    let r_s = spec.norm_indices().iter().map(|r| r.max(s)).collect();
    let r_star_s = spec.p_star(s);
    Embedding {
        gamma_bar,
        gamma,
        r_s,
        r_star_s,
        valid: spec.tau(r_star_s) > 0.0,
    }
}

/// Strong maximal function with frozen axes: at each grid point the supremum
/// over centered axis-aligned boxes (in the axes not listed in `frozen`) of
/// the box average of `lambda`, with the frozen coordinates pinned to the
/// point. Boxes are grid-aligned with half-widths up to `half_width_cap`
/// cells per free axis; zero extension outside the grid.
pub fn strong_maximal(
    lambda: &GridFunction,
    frozen: &[usize],
    half_width_cap: usize,
) -> Result<GridFunction, CoreError> {
    let grid = *lambda.grid();
    let d = grid.dim();
    if lambda.values().iter().any(|v| *v < 0.0) {
        return Err(CoreError::InvalidArgument(
            "strong maximal operator needs a nonnegative input".into(),
        ));
    }
    if frozen.iter().any(|j| *j >= d) {
        return Err(CoreError::InvalidArgument("frozen axis out of range".into()));
    }
    let free: Vec<usize> = (0..d).filter(|j| !frozen.contains(j)).collect();
    if free.is_empty() {
        return Ok(lambda.clone());
    }
    let n = grid.points_per_axis();

    // d-dimensional summed-area table, prefix along every axis
    let mut sat = lambda.values().to_vec();
    for axis in 0..d {
        for flat in 0..grid.len() {
            let idx = grid.unravel(flat);
            if idx[axis] > 0 {
                let mut prev = idx;
                prev[axis] -= 1;
                // safe: raveled index of prev is below flat in row-major order
                let pv = sat[grid.ravel(&prev[..d])];
                sat[flat] += pv;
            }
        }
    }
    let box_sum = |lo: &[usize], hi: &[usize]| -> f64 {
        // inclusion-exclusion over the d axes
        let mut acc = 0.0;
        for mask in 0..(1usize << d) {
            let mut idx = [0usize; crate::grid::MAX_DIM];
            let mut sign = 1.0;
            let mut skip = false;
            for axis in 0..d {
                if mask & (1 << axis) == 0 {
                    idx[axis] = hi[axis];
                } else if lo[axis] == 0 {
                    skip = true;
                    break;
                } else {
                    idx[axis] = lo[axis] - 1;
                    sign = -sign;
                }
            }
            if !skip {
                acc += sign * sat[grid.ravel(&idx[..d])];
            }
        }
        acc
    };

    let cap = half_width_cap.min(n - 1);
    let mut out = GridFunction::zeros(grid);
    let mut widths = alloc::vec![0usize; free.len()];
    for flat in 0..grid.len() {
        let idx = grid.unravel(flat);
        let mut best = 0.0f64;
        // enumerate all half-width combinations over the free axes
        widths.iter_mut().for_each(|w| *w = 0);
        loop {
            let mut lo = idx;
            let mut hi = idx;
            let mut cells = 1.0f64;
            for (fi, &axis) in free.iter().enumerate() {
                let k = widths[fi];
                lo[axis] = idx[axis].saturating_sub(k);
                hi[axis] = (idx[axis] + k).min(n - 1);
                cells *= (2 * k + 1) as f64;
            }
            let avg = box_sum(&lo[..d], &hi[..d]) / cells;
            if avg > best {
                best = avg;
            }
            // odometer increment
            let mut pos = 0;
            loop {
                if pos == widths.len() {
                    break;
                }
                widths[pos] += 1;
                if widths[pos] <= cap {
                    break;
                }
                widths[pos] = 0;
                pos += 1;
            }
            if pos == widths.len() {
                break;
            }
        }
        out.values_mut()[flat] = best;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn grid1(n: usize) -> Grid {
        Grid::new(1, 1.0, n).unwrap()
    }

    #[test]
    fn affine_annihilation() {
        let g = grid1(64);
        let f = GridFunction::from_fn(g, |x| x[0]);
        let u = 4.0 * g.cell_width();
        let d1 = difference(&f, u, 0, 1).unwrap();
        let d2 = difference(&f, u, 0, 2).unwrap();
        // interior points: first difference constant u, second difference zero
        for i in 20..40 {
            assert!((d1.values()[i] - u).abs() < 1e-12);
            assert!(d2.values()[i].abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_second_difference_exact() {
        let g = grid1(64);
        let f = GridFunction::from_fn(g, |x| x[0] * x[0]);
        let u = 2.0 * g.cell_width();
        let d2 = difference(&f, u, 0, 2).unwrap();
        for i in 16..48 {
            assert!((d2.values()[i] - 2.0 * u * u).abs() < 1e-12);
        }
    }

    #[test]
    fn independent_axis_vanishes() {
        let g = Grid::new(2, 1.0, 16).unwrap();
        let f = GridFunction::from_fn(g, |x| (2.0 * x[0]).sin());
        let u = g.cell_width();
        let d = difference(&f, u, 1, 3).unwrap();
        // interior points only: zero extension kicks in within 3 cells of
        // the boundary along the differenced axis
        for flat in 0..g.len() {
            let idx = g.unravel(flat);
            if idx[1] + 3 < g.points_per_axis() {
                assert!(d.values()[flat].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn composition_identity() {
        let g = grid1(32);
        let f = GridFunction::from_fn(g, |x| (3.0 * x[0]).cos() + x[0]);
        let u = g.cell_width();
        for k in 2..=4u32 {
            let direct = difference(&f, u, 0, k).unwrap();
            let inner = difference(&f, u, 0, k - 1).unwrap();
            let composed = difference(&inner, u, 0, 1).unwrap();
            for (a, b) in direct.values().iter().zip(composed.values()) {
                assert!((a - b).abs() < 1e-10, "k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_unaligned_step() {
        let g = grid1(16);
        let f = GridFunction::zeros(g);
        assert!(difference(&f, 0.7 * g.cell_width(), 0, 1).is_err());
    }

    #[test]
    fn zero_function_membership() {
        let g = grid1(64);
        let f = GridFunction::zeros(g);
        let spec = ClassSpec::isotropic(1, 1.5, 2.0, 0.5).unwrap();
        let report = check_membership(&f, &spec, &default_u_grid(&g), 0.1).unwrap();
        assert!(report.pass);
    }

    #[test]
    fn saturated_bound_fails_after_scaling() {
        // tent of slope a/w: second differences across the kinks equal
        // 2 a u / w, so radius L = 2a/w exactly saturates the beta=1,
        // r=inf bound; doubling the amplitude must fail.
        let g = grid1(128);
        let (a, w) = (1.0, 0.5);
        let tent = |x: f64| a * (1.0 - x.abs() / w).max(0.0);
        let f = GridFunction::from_fn(g, |x| tent(x[0]));
        let l = 2.0 * a / w;
        let spec =
            ClassSpec::new(alloc::vec![1.0], alloc::vec![f64::INFINITY], alloc::vec![l]).unwrap();
        let report = check_membership(&f, &spec, &default_u_grid(&g), 0.1).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.axes[0].worst_ratio > 0.5, "bound not near-saturated");
        let doubled = f.scale(2.0);
        let report2 = check_membership(&doubled, &spec, &default_u_grid(&g), 0.1).unwrap();
        assert!(!report2.pass, "{report2:?}");
    }

    #[test]
    fn embed_fixed_point() {
        let spec = ClassSpec::new(
            alloc::vec![2.0, 1.0],
            alloc::vec![4.0, 4.0],
            alloc::vec![1.0, 1.0],
        )
        .unwrap();
        let e = embed(&spec, 4.0);
        assert!((e.gamma_bar[0] - 2.0).abs() < 1e-12);
        assert!((e.gamma_bar[1] - 1.0).abs() < 1e-12);
        assert_eq!(e.r_s, alloc::vec![4.0, 4.0]);
    }

    #[test]
    fn embed_univariate_example() {
        // d=1, beta=1, r=1, s=4: tau(4) = 1/4, tau(1) = 1, gamma_bar = 1/4
        let spec = ClassSpec::isotropic(1, 1.0, 1.0, 1.0).unwrap();
        let e = embed(&spec, 4.0);
        assert!((e.gamma_bar[0] - 0.25).abs() < 1e-12);
        assert!(e.valid); // tau(r*(4)) = tau(4) = 1/4 > 0
    }

    #[test]
    fn embed_invalid_hypothesis_flag() {
        // d=1, beta=1/2, r=1: 1/omega = 2, tau(s) = 1 - 2 + 1/(2s) < 0 for s >= 1
        let spec = ClassSpec::isotropic(1, 0.5, 1.0, 1.0).unwrap();
        let e = embed(&spec, 3.0);
        assert!(!e.valid);
        assert!(e.gamma_bar[0].is_finite());
    }

    #[test]
    fn maximal_of_constant_is_constant() {
        let g = Grid::new(2, 1.0, 8).unwrap();
        let f = GridFunction::constant(g, 2.5);
        let m = strong_maximal(&f, &[], 31).unwrap();
        for v in m.values() {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn maximal_all_axes_frozen_is_identity() {
        let g = grid1(16);
        let f = GridFunction::from_fn(g, |x| x[0].abs());
        let m = strong_maximal(&f, &[0], 31).unwrap();
        assert_eq!(m.values(), f.values());
    }

    #[test]
    fn maximal_rejects_negative_input() {
        let g = grid1(16);
        let f = GridFunction::from_fn(g, |x| x[0]);
        assert!(strong_maximal(&f, &[], 31).is_err());
    }

    #[test]
    fn maximal_matches_brute_force_1d() {
        let g = grid1(32);
        // indicator of [0, 1/2]
        let f = GridFunction::from_fn(g, |x| if (0.0..=0.5).contains(&x[0]) { 1.0 } else { 0.0 });
        let m = strong_maximal(&f, &[], 31).unwrap();
        let n = g.points_per_axis();
        for i in 0..n {
            let mut best = 0.0f64;
            for k in 0..=31usize.min(n - 1) {
                let lo = i.saturating_sub(k);
                let hi = (i + k).min(n - 1);
                let sum: f64 = f.values()[lo..=hi].iter().sum();
                best = best.max(sum / (2 * k + 1) as f64);
            }
            assert!((m.values()[i] - best).abs() < 1e-12, "point {i}");
        }
        // maximal function dominates the input
        for (mv, fv) in m.values().iter().zip(f.values()) {
            assert!(mv + 1e-12 >= *fv);
        }
    }

    #[test]
    fn maximal_strong_type_bound_stable() {
        // empirical (r,r) operator norm stays bounded under refinement
        use rand::{Rng, SeedableRng};
        for &r in &[2.0f64, 4.0] {
            let mut prev_worst = 0.0f64;
            for &n in &[32usize, 64] {
                let g = grid1(n);
                let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(42);
                let mut worst = 0.0f64;
                for _ in 0..50 {
                    let f = GridFunction::from_values(
                        g,
                        (0..n).map(|_| rng.gen::<f64>()).collect(),
                    )
                    .unwrap();
                    let m = strong_maximal(&f, &[], 31).unwrap();
                    let ratio = m.lp_norm(r) / f.lp_norm(r);
                    worst = worst.max(ratio);
                }
                assert!(worst.is_finite() && worst >= 1.0 - 1e-12);
                // refinement must not blow the empirical constant up
                if prev_worst > 0.0 {
                    assert!(worst < 2.0 * prev_worst, "r={r}: {prev_worst} -> {worst}");
                }
                prev_worst = worst;
            }
        }
    }
}
