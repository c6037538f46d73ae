//! Compactly supported scalar kernels, the higher-order combination
//! w_l(y) = Σ_{i=1}^l binom(l,i) (-1)^{i+1} (1/i) w(y/i), and their tensor
//! products.
//!
//! The base profile w is supported on [-1/(2l), 1/(2l)] with ∫w = 1; the
//! combination then integrates to one and has vanishing moments up to order
//! l-1, while its support never exceeds [-1/2, 1/2].

use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::quad;

/// Sample count used for Lipschitz and support estimation.
const SCAN_SAMPLES: usize = 10_000;

/// Base profile of the kernel construction. Both integrate to one on
/// [-1/(2l), 1/(2l)]; the quartic spline is C^1 across the support boundary,
/// the cosine bump only Lipschitz there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum KernelProfile {
    CosineBump,
    QuarticSpline,
}

impl KernelProfile {
    /// Base kernel value at `y` for order `ell` (support radius 1/(2 ell)).
    fn base(self, ell: u32, y: f64) -> f64 {
        let l = ell as f64;
        let r = 1.0 / (2.0 * l);
        if math::abs(y) > r {
            return 0.0;
        }
        match self {
            // l * (pi/2) cos(pi l y): rescaled cosine arch, integral 1
            KernelProfile::CosineBump => l * (math::PI / 2.0) * math::cos(math::PI * l * y),
            // 2l * (15/16) (1 - (2 l y)^2)^2: rescaled biweight, integral 1
            KernelProfile::QuarticSpline => {
                let t = 2.0 * l * y;
                let u = 1.0 - t * t;
                2.0 * l * (15.0 / 16.0) * u * u
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    /// Linear combination Σ coef_i * base(y / dilation_i).
    Weighted {
        profile: KernelProfile,
        ell: u32,
        terms: Vec<(f64, f64)>,
    },
    /// Arbitrary evaluator, used to probe the assumption checker.
    Raw { eval: fn(f64) -> f64 },
}

/// A compactly supported scalar kernel with ∫ = 1.
#[derive(Debug, Clone)]
pub struct ScalarKernel {
    repr: Repr,
    support: f64,
    lipschitz: f64,
}

/// Build the base profile w for order `ell`: support [-1/(2 ell), 1/(2 ell)],
/// ∫ w = 1.
pub fn build_base_w(profile: KernelProfile, ell: u32) -> ScalarKernel {
    assert!(ell >= 1, "kernel order must be >= 1");
    let support = 1.0 / (2.0 * ell as f64);
    let repr = Repr::Weighted {
        profile,
        ell,
        terms: alloc::vec![(1.0, 1.0)],
    };
    finish(repr, support)
}

/// The higher-order combination w_l: ∫ w_l = 1 and ∫ w_l(y) y^k dy = 0 for
/// k = 1..l-1. `w` must come from [`build_base_w`] with the same `ell`.
pub fn build_wl(w: &ScalarKernel, ell: u32) -> ScalarKernel {
    let profile = match &w.repr {
        Repr::Weighted { profile, ell: base_ell, terms } => {
            assert_eq!(*base_ell, ell, "base kernel order mismatch");
            assert_eq!(terms.len(), 1, "expected an unmixed base kernel");
            *profile
        }
        Repr::Raw { .. } => panic!("w_l construction needs a profile base kernel"),
    };
    let mut terms = Vec::with_capacity(ell as usize);
    let mut binom = 1.0f64; // binom(ell, i), updated incrementally
    for i in 1..=ell {
        binom = binom * (ell - i + 1) as f64 / i as f64;
        let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
        terms.push((binom * sign / i as f64, i as f64));
    }
    // widest term: w(y / ell) has support ell/(2 ell) = 1/2
    let support = ell as f64 / (2.0 * ell as f64);
    finish(
        Repr::Weighted {
            profile,
            ell,
            terms,
        },
        support,
    )
}

fn finish(repr: Repr, support: f64) -> ScalarKernel {
    let mut k = ScalarKernel {
        repr,
        support,
        lipschitz: 0.0,
    };
    k.lipschitz = estimate_lipschitz(&k, SCAN_SAMPLES);
    k
}

fn estimate_lipschitz(k: &ScalarKernel, samples: usize) -> f64 {
    let margin = k.support * 0.05 + 1e-3;
    let a = -k.support - margin;
    let b = k.support + margin;
    let h = (b - a) / samples as f64;
    let mut best = 0.0f64;
    let mut prev = k.eval(a);
    for i in 1..=samples {
        let cur = k.eval(a + h * i as f64);
        let slope = math::abs(cur - prev) / h;
        if slope > best {
            best = slope;
        }
        prev = cur;
    }
    best
}

impl ScalarKernel {
    /// Wrap a raw evaluator (tests and diagnostics only; no profile metadata).
    pub fn from_raw(eval: fn(f64) -> f64, support: f64) -> ScalarKernel {
        finish(Repr::Raw { eval }, support)
    }

    pub fn eval(&self, y: f64) -> f64 {
        match &self.repr {
            Repr::Weighted {
                profile,
                ell,
                terms,
            } => {
                let mut acc = 0.0;
                for &(coef, dilation) in terms {
                    acc += coef * profile.base(*ell, y / dilation);
                }
                acc
            }
            Repr::Raw { eval } => eval(y),
        }
    }

    /// Support radius a: the kernel vanishes outside [-a, a].
    pub fn support(&self) -> f64 {
        self.support
    }

    /// Estimated Lipschitz constant (max finite-difference slope).
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn order(&self) -> Option<u32> {
        match &self.repr {
            Repr::Weighted { ell, .. } => Some(*ell),
            Repr::Raw { .. } => None,
        }
    }

    pub fn profile(&self) -> Option<KernelProfile> {
        match &self.repr {
            Repr::Weighted { profile, .. } => Some(*profile),
            Repr::Raw { .. } => None,
        }
    }

    /// ∫ kernel by Simpson quadrature over the support.
    pub fn integral(&self) -> f64 {
        quad::simpson(|y| self.eval(y), -self.support, self.support)
    }

    /// ∫ kernel(y) y^k dy.
    pub fn moment(&self, k: u32) -> f64 {
        quad::moment(|y| self.eval(y), k, -self.support, self.support)
    }

    /// 1-d L_p norm; sup over a dense sample for p = infinity.
    pub fn norm(&self, p: f64) -> f64 {
        assert!(p >= 1.0);
        if p.is_infinite() {
            quad::sup_norm(|y| self.eval(y), -self.support, self.support, SCAN_SAMPLES)
        } else {
            quad::lp_norm(|y| self.eval(y), p, -self.support, self.support)
        }
    }
}

/// Tensor product K(x) = Π_j kernel(x_j) in dimension d.
#[derive(Debug, Clone)]
pub struct ProductKernel {
    scalar: ScalarKernel,
    dim: usize,
}

/// Assemble the tensor-product kernel from a scalar factor.
pub fn product_kernel(scalar: ScalarKernel, dim: usize) -> ProductKernel {
    assert!(dim >= 1);
    ProductKernel { scalar, dim }
}

impl ProductKernel {
    pub fn scalar(&self) -> &ScalarKernel {
        &self.scalar
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Support radius of each factor.
    pub fn support(&self) -> f64 {
        self.scalar.support()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut acc = 1.0;
        for &xi in x {
            acc *= self.scalar.eval(xi);
        }
        acc
    }

    /// ‖K‖_p = ‖kernel‖_{p,R}^d by factorization of the product.
    pub fn norm(&self, p: f64) -> f64 {
        math::powi(self.scalar.norm(p), self.dim as i32)
    }

    /// Serializable descriptor: {profile, ell, d, a, A}.
    pub fn descriptor(&self) -> KernelDescriptor {
        KernelDescriptor {
            profile: match self.scalar.profile() {
                Some(KernelProfile::CosineBump) => String::from("cosine_bump"),
                Some(KernelProfile::QuarticSpline) => String::from("quartic_spline"),
                None => String::from("custom"),
            },
            ell: self.scalar.order().unwrap_or(0),
            d: self.dim,
            a: self.scalar.support(),
            lipschitz: self.scalar.lipschitz(),
        }
    }
}

/// JSON-facing kernel summary.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KernelDescriptor {
    pub profile: String,
    pub ell: u32,
    pub d: usize,
    pub a: f64,
    pub lipschitz: f64,
}

/// Diagnostic produced by [`check_assumption1`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Assumption1Report {
    /// Estimated support radius (outermost sample with |kernel| > 0).
    pub support_radius: f64,
    /// Lipschitz estimate at the base sampling density.
    pub lipschitz: f64,
    /// Lipschitz estimate at 4x density; grows with density for jumps.
    pub lipschitz_refined: f64,
    /// Quadrature value of ∫ kernel.
    pub integral: f64,
    pub pass: bool,
}

/// Verify the standing kernel assumption: unit integral, compact support and
/// a stable (density-independent) Lipschitz constant for the scalar factor.
pub fn check_assumption1(kernel: &ProductKernel) -> Assumption1Report {
    let k = kernel.scalar();
    let integral = k.integral();
    let lipschitz = estimate_lipschitz(k, SCAN_SAMPLES);
    let lipschitz_refined = estimate_lipschitz(k, 4 * SCAN_SAMPLES);

    // outermost sample where the kernel is non-negligible
    let margin = k.support() * 0.05 + 1e-3;
    let hi = k.support() + margin;
    let mut support_radius = 0.0f64;
    for i in 0..=SCAN_SAMPLES {
        let y = -hi + 2.0 * hi * i as f64 / SCAN_SAMPLES as f64;
        if math::abs(k.eval(y)) > 1e-12 {
            support_radius = support_radius.max(math::abs(y));
        }
    }

    let integral_ok = math::abs(integral - 1.0) <= 1e-10;
    // a genuine discontinuity makes the slope estimate scale with density
    let lipschitz_ok = lipschitz_refined <= 2.0 * lipschitz + 1e-9;
    Assumption1Report {
        support_radius,
        lipschitz,
        lipschitz_refined,
        integral,
        pass: integral_ok && lipschitz_ok,
    }
}
