//! The rate calculus: scalar aggregates of a smoothness class, the tau/kappa
//! functionals, the zone taxonomy of convergence regimes, and the lower/upper
//! risk normalizations with their exponent.
//!
//! Conventions for degenerate parameters: all-infinite norm indices give
//! omega = kappa = +inf (dense behaviour for every finite p), kappa(inf) is
//! -inf, and 1/(s beta) vanishes at s = inf. All operations are closed-form;
//! no numerical search.

use alloc::vec::Vec;

use crate::error::CoreError;
use crate::math;
use crate::nikolskii::ClassSpec;

/// Convergence regime of a (class, norm index) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Zone {
    /// kappa(p) > 0: classical rate, no log factor.
    Dense,
    /// kappa(p) <= 0, tau(p*) > 0: log-corrected rate.
    Sparse,
    /// kappa(p) <= 0, tau(p*) <= 0, p* > p: rate with a different exponent,
    /// absent in dimension one.
    NewZone,
    /// kappa(p) <= 0, tau(p*) <= 0, p* = p: no uniformly consistent
    /// estimator exists.
    NoConsistency,
}

/// Everything the rate calculus derives from a class and a risk norm index.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateProfile {
    pub spec: ClassSpec,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::float"))]
    pub p: f64,
    /// Aggregate smoothness: 1/beta = sum 1/beta_j.
    pub beta: f64,
    /// Aggregate 1/omega = sum 1/(beta_j r_j); infinite when all r_j are.
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::float"))]
    pub omega: f64,
    pub l_beta: f64,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::float"))]
    pub p_star: f64,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::float"))]
    pub p_pm: f64,
    /// Embedded smoothness exponents (gamma_j of the embedding at p_pm on
    /// finite axes, beta_j elsewhere).
    pub gamma: Vec<f64>,
    /// Embedded norm indices (p_pm on finite axes, infinity elsewhere).
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::float_vec"))]
    pub q: Vec<f64>,
    /// 1/gamma_total = sum 1/gamma_j; NaN when some gamma_j <= 0.
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::float"))]
    pub gamma_total: f64,
    /// 1/upsilon = sum 1/(gamma_j q_j); NaN when undefined, inf when the sum
    /// is empty.
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::float"))]
    pub upsilon: f64,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_util::float"))]
    pub l_gamma: f64,
    pub zone: Zone,
    /// The rate exponent; zero exactly in the no-consistency zone.
    pub exponent: f64,
    /// kappa(p) = 0: excluded boundary of the upper-bound theorem.
    pub boundary_kappa_zero: bool,
    /// min r_j = 1: the other excluded boundary.
    pub boundary_rj_one: bool,
    /// Membership in the consistency region.
    pub consistent: bool,
}

/// tau(s) and kappa(s) for the class.
pub fn tau_kappa(spec: &ClassSpec, s: f64) -> (f64, f64) {
    (spec.tau(s), spec.kappa(s))
}

/// Classify the (class, p) pair: zone and rate exponent.
pub fn classify(spec: &ClassSpec, p: f64) -> (Zone, f64) {
    let kappa_p = spec.kappa(p);
    let p_star = spec.p_star(p);
    let tau_star = spec.tau(p_star);
    if kappa_p > 0.0 {
        let beta = spec.beta_total();
        return (Zone::Dense, beta / (2.0 * beta + 1.0));
    }
    if tau_star > 0.0 {
        return (Zone::Sparse, spec.tau(p) / (2.0 * spec.tau(2.0)));
    }
    if p_star > p {
        let omega = spec.omega();
        let exponent = if p_star.is_infinite() {
            // limit of omega (p* - p) / (p (p* - omega(2 + 1/beta)))
            omega / p
        } else {
            omega * (p_star - p) / (p * (p_star - omega * (2.0 + spec.inv_beta())))
        };
        return (Zone::NewZone, exponent);
    }
    (Zone::NoConsistency, 0.0)
}

/// Membership in the consistency region: tau(p) > 0 for p >= 2, kappa(p) > 0
/// for p < 2, or p* > p.
pub fn is_consistent(spec: &ClassSpec, p: f64) -> bool {
    let primary = if p >= 2.0 {
        spec.tau(p) > 0.0
    } else {
        spec.kappa(p) > 0.0
    };
    primary || spec.p_star(p) > p
}

/// Compute every aggregate and the zone classification.
pub fn aggregates(spec: &ClassSpec, p: f64) -> RateProfile {
    assert!(p >= 1.0, "risk norm index must be >= 1");
    let d = spec.dim();
    let beta = spec.beta_total();
    let omega = spec.omega();
    let l_beta = spec.l_beta();
    let p_star = spec.p_star(p);
    let p_pm = spec.p_pm(p);

    let tau_pm = spec.tau(p_pm);
    let mut gamma = Vec::with_capacity(d);
    let mut q = Vec::with_capacity(d);
    for j in 0..d {
        let rj = spec.norm_indices()[j];
        if rj.is_finite() {
            gamma.push(spec.beta()[j] * tau_pm / spec.tau(rj));
            q.push(p_pm);
        } else {
            gamma.push(spec.beta()[j]);
            q.push(f64::INFINITY);
        }
    }

    let (gamma_total, upsilon, l_gamma) = if gamma.iter().any(|g| *g <= 0.0) {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let inv_gamma: f64 = gamma.iter().map(|g| 1.0 / g).sum();
        let inv_upsilon: f64 = gamma
            .iter()
            .zip(&q)
            .map(|(g, qj)| if qj.is_finite() { 1.0 / (g * qj) } else { 0.0 })
            .sum();
        let upsilon = if inv_upsilon == 0.0 {
            f64::INFINITY
        } else {
            1.0 / inv_upsilon
        };
        let l_gamma = spec
            .radii()
            .iter()
            .zip(&gamma)
            .map(|(l, g)| math::powf(*l, 1.0 / g))
            .product();
        (1.0 / inv_gamma, upsilon, l_gamma)
    };

    let (zone, exponent) = classify(spec, p);
    RateProfile {
        spec: spec.clone(),
        p,
        beta,
        omega,
        l_beta,
        p_star,
        p_pm,
        gamma,
        q,
        gamma_total,
        upsilon,
        l_gamma,
        zone,
        exponent,
        boundary_kappa_zero: spec.kappa(p) == 0.0,
        boundary_rj_one: spec.norm_indices().iter().any(|r| *r == 1.0),
        consistent: is_consistent(spec, p),
    }
}

fn check_eps(eps: f64) -> Result<(), CoreError> {
    if !(eps > 0.0 && eps < math::exp(-1.0)) {
        return Err(CoreError::InvalidArgument(alloc::format!(
            "noise level {eps} outside (0, e^-1): |ln eps| must exceed 1"
        )));
    }
    Ok(())
}

/// Lower-bound normalization delta_eps raised to the rate exponent.
pub fn lower_rate(spec: &ClassSpec, p: f64, eps: f64) -> Result<f64, CoreError> {
    check_eps(eps)?;
    let profile = aggregates(spec, p);
    let log_factor = math::abs(math::ln(eps));
    let l_beta = profile.l_beta;
    let delta = match profile.zone {
        Zone::Dense => l_beta * eps * eps,
        Zone::NewZone | Zone::NoConsistency => l_beta * eps * eps * log_factor,
        Zone::Sparse => {
            let two_over_p = if p.is_infinite() { 0.0 } else { 2.0 / p };
            math::powf(l_beta, (1.0 - two_over_p) / spec.tau(p)) * eps * eps * log_factor
        }
    };
    Ok(math::powf(delta, profile.exponent))
}

/// Upper-bound normalization bar-delta_eps raised to the rate exponent.
///
/// The sparse-zone constant V_p enters before exponentiation; the paper's
/// closed-form display of that constant describes the post-exponentiation
/// factor, so here it is de-exponentiated, which makes V_p collapse to
/// L_beta^{(1-2/p)/tau(p)} whenever all radii coincide and keeps the upper
/// and lower normalizations equal there.
pub fn upper_rate(spec: &ClassSpec, p: f64, eps: f64) -> Result<f64, CoreError> {
    check_eps(eps)?;
    let profile = aggregates(spec, p);
    if profile.zone == Zone::NoConsistency {
        return Err(CoreError::ZoneMismatch(
            "no consistent estimation: upper normalization undefined".into(),
        ));
    }
    let log_factor = math::abs(math::ln(eps));
    let l_beta = profile.l_beta;
    let kappa_p = spec.kappa(p);
    let delta = if kappa_p >= 0.0 {
        l_beta * eps * eps
    } else if spec.tau(profile.p_star) > 0.0 {
        let v_p = sparse_v_p(&profile);
        v_p * eps * eps * log_factor
    } else {
        // new zone: minimum radius over axes attaining p*
        let l_star = spec
            .radii()
            .iter()
            .zip(spec.norm_indices())
            .filter(|(_, r)| **r == profile.p_star)
            .map(|(l, _)| *l)
            .fold(f64::INFINITY, f64::min);
        l_beta * math::powf(l_star, 1.0 / profile.exponent) * eps * eps * log_factor
    };
    Ok(math::powf(delta, profile.exponent))
}

/// V_p entering the sparse-zone upper normalization (pre-exponentiation).
fn sparse_v_p(profile: &RateProfile) -> f64 {
    let spec = &profile.spec;
    let p = profile.p;
    if p.is_infinite() {
        return profile.l_gamma;
    }
    let inv_gap = 1.0 / profile.gamma_total - 1.0 / profile.beta;
    let gap_degenerate = inv_gap.is_nan() || math::abs(inv_gap) < 1e-12;
    let ratio_factor = if gap_degenerate || profile.l_gamma == profile.l_beta {
        1.0
    } else {
        let e_display = (p - profile.omega * (2.0 + spec.inv_beta()))
            / (2.0 * p * profile.beta * profile.omega * spec.tau(2.0) * inv_gap);
        math::powf(
            profile.l_gamma / profile.l_beta,
            e_display / profile.exponent,
        )
    };
    ratio_factor * profile.l_beta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nikolskii::ClassSpec;

    fn spec(beta: &[f64], r: &[f64], l: &[f64]) -> ClassSpec {
        ClassSpec::new(beta.to_vec(), r.to_vec(), l.to_vec()).unwrap()
    }

    #[test]
    fn aggregates_direct_evaluation() {
        let s = spec(&[2.0, 2.0], &[2.0, 2.0], &[1.0, 1.0]);
        let prof = aggregates(&s, 2.0);
        assert!((prof.omega - 2.0).abs() < 1e-14);
        assert!((prof.beta - 1.0).abs() < 1e-14);
        assert!((prof.l_beta - 1.0).abs() < 1e-14);
    }

    #[test]
    fn all_infinite_norm_indices_convention() {
        let s = spec(&[2.0], &[f64::INFINITY], &[1.0]);
        assert!(s.omega().is_infinite());
        // tau(s) = 1 + 1/(s beta)
        assert!((s.tau(2.0) - (1.0 + 0.25)).abs() < 1e-14);
        assert_eq!(s.kappa(4.0), f64::INFINITY);
        let (zone, _) = classify(&s, 17.0);
        assert_eq!(zone, Zone::Dense);
        // at p = inf the tau criterion takes over: tau(inf) = 1 > 0
        let (zone_inf, a_inf) = classify(&s, f64::INFINITY);
        assert_eq!(zone_inf, Zone::Sparse);
        // tau(inf)/(2 tau(2)) = 1/(2 + 1/beta) = beta/(2 beta + 1)
        assert!((a_inf - 2.0 / 5.0).abs() < 1e-14);
    }

    #[test]
    fn tau_kappa_hand_values() {
        // d=1, beta=2, r=2: omega = 4
        let s = spec(&[2.0], &[2.0], &[1.0]);
        let (t, k) = tau_kappa(&s, 2.0);
        assert!((t - 1.0).abs() < 1e-14);
        assert!((k - 8.0).abs() < 1e-14);
        // d=1, beta=1, r=1: omega = 1
        let s2 = spec(&[1.0], &[1.0], &[1.0]);
        let (t4, k4) = tau_kappa(&s2, 4.0);
        assert!((t4 - 0.25).abs() < 1e-14);
        assert!((k4 + 1.0).abs() < 1e-14);
    }

    #[test]
    fn kappa_tau_relation_identity() {
        let s = spec(&[2.0], &[2.0], &[1.0]);
        for &x in &[1.0, 2.0, 3.0, 5.0, 10.0] {
            let (t, k) = tau_kappa(&s, x);
            let lhs = k / (s.omega() * x);
            let rhs = (2.0 - x) / x + t;
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_hand_examples() {
        // dense
        let s = spec(&[2.0, 2.0], &[2.0, 2.0], &[1.0, 1.0]);
        let (zone, a) = classify(&s, 2.0);
        assert_eq!(zone, Zone::Dense);
        assert!((a - 1.0 / 3.0).abs() < 1e-14);
        // sparse
        let s = spec(&[1.0], &[1.0], &[1.0]);
        let (zone, a) = classify(&s, 4.0);
        assert_eq!(zone, Zone::Sparse);
        assert!((a - 0.25).abs() < 1e-14);
        // no consistency with the kappa(2) = 0 boundary flag
        let s = spec(&[0.5], &[1.0], &[1.0]);
        let (zone, a) = classify(&s, 2.0);
        assert_eq!(zone, Zone::NoConsistency);
        assert_eq!(a, 0.0);
        let prof = aggregates(&s, 2.0);
        assert!(prof.boundary_kappa_zero);
        assert!(prof.boundary_rj_one);
        assert!(!prof.consistent);
    }

    #[test]
    fn new_zone_needs_anisotropy() {
        // kappa(p) <= 0, tau(p*) <= 0, p* > p requires distinct r_j:
        // omega = 0.4, kappa(3) = -0.6, tau(4) = -0.5
        let s = spec(&[0.5, 0.5], &[1.0, 4.0], &[1.0, 1.0]);
        let p = 3.0;
        let p_star = s.p_star(p);
        assert_eq!(p_star, 4.0);
        if s.kappa(p) <= 0.0 && s.tau(p_star) <= 0.0 {
            let (zone, a) = classify(&s, p);
            assert_eq!(zone, Zone::NewZone);
            let omega = s.omega();
            let expect = omega * (p_star - p) / (p * (p_star - omega * (2.0 + s.inv_beta())));
            assert!((a - expect).abs() < 1e-14);
            assert!(a > 0.0);
        } else {
            panic!("test parameters no longer hit the new zone");
        }
    }

    #[test]
    fn lower_rate_examples() {
        // dense d=1, beta=2, L=1, eps=0.1: (eps^2)^{2/5}
        let s = spec(&[2.0], &[f64::INFINITY], &[1.0]);
        let v = lower_rate(&s, 2.0, 0.1).unwrap();
        assert!((v - 0.01f64.powf(0.4)).abs() < 1e-14);
        // no-consistency: exponent zero, no decay
        let s0 = spec(&[0.5], &[1.0], &[1.0]);
        assert_eq!(lower_rate(&s0, 2.0, 0.1).unwrap(), 1.0);
        // L-scaling in the dense branch: doubling radii scales delta by 2^{1/beta}
        let s1 = spec(&[2.0, 1.0], &[f64::INFINITY, f64::INFINITY], &[1.0, 1.0]);
        let s2 = spec(&[2.0, 1.0], &[f64::INFINITY, f64::INFINITY], &[2.0, 2.0]);
        let a = aggregates(&s1, 2.0).exponent;
        let r1 = lower_rate(&s1, 2.0, 0.05).unwrap();
        let r2 = lower_rate(&s2, 2.0, 0.05).unwrap();
        let inv_beta = 1.0 / 2.0 + 1.0;
        assert!((r2 / r1 - 2.0f64.powf(inv_beta * a)).abs() < 1e-12);
    }

    #[test]
    fn upper_rate_examples() {
        // dense: upper equals lower
        let s = spec(&[2.0], &[f64::INFINITY], &[1.0]);
        assert!(
            (upper_rate(&s, 2.0, 0.05).unwrap() - lower_rate(&s, 2.0, 0.05).unwrap()).abs()
                < 1e-14
        );
        // sparse with equal radii: upper equals lower
        let s = spec(&[1.0], &[1.0], &[1.0]);
        let u = upper_rate(&s, 4.0, 0.01).unwrap();
        let l = lower_rate(&s, 4.0, 0.01).unwrap();
        assert!((u - l).abs() < 1e-12);
        // hand value: (eps^2 |ln eps|)^{1/4} at eps = 0.01
        let expect = (1e-4 * (100.0f64).ln()).powf(0.25);
        assert!((u - expect).abs() < 1e-12);
        // no-consistency zone: error
        let s0 = spec(&[0.5], &[1.0], &[1.0]);
        assert!(matches!(
            upper_rate(&s0, 2.0, 0.05),
            Err(CoreError::ZoneMismatch(_))
        ));
    }

    #[test]
    fn sparse_upper_rate_unequal_radii_sane() {
        // d=2 sparse with distinct radii: normalization finite and positive,
        // and the log-corrected rate decays with eps
        let s = spec(&[1.0, 2.0], &[1.5, 2.0], &[0.5, 3.0]);
        let p = 8.0;
        let (zone, _) = classify(&s, p);
        assert_eq!(zone, Zone::Sparse);
        let u1 = upper_rate(&s, p, 0.05).unwrap();
        let u2 = upper_rate(&s, p, 0.01).unwrap();
        assert!(u1.is_finite() && u2.is_finite() && u2 < u1);
    }

    #[test]
    fn rejects_large_eps() {
        let s = spec(&[2.0], &[2.0], &[1.0]);
        assert!(lower_rate(&s, 2.0, 0.5).is_err());
        assert!(upper_rate(&s, 2.0, 0.9).is_err());
    }
}
