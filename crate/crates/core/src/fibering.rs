//! Exact analysis of the fiber maps
//!
//! ```text
//! psi(t) = (A/2) t^2 + (q^2 B/4) t^4 - (P/p) t^p,   psi'(t) = t h(t),
//! h(t)   = A + q^2 B t^2 - P t^(p-2)
//! ```
//!
//! for the coefficient triple `A = ||u||^2`, `B = ∫ phi_u u^2`,
//! `P = ||u||_p^p`. Everything here works on triples and never touches a
//! grid. `h` is convex with a single minimiser `t_h`; the sign of `h(t_h)`
//! decides whether the fiber has two critical points, one degenerate one, or
//! none.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{h1_norm_sq, lp_norm_p, RadialFunction};
use crate::params::ProblemParams;
use crate::potential::solve_potential;

/// Relative band (in units of `A`) inside which `h(t_h)` counts as zero.
pub const FIBER_ZERO_BAND: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberCoeffs {
    /// `A = ||u||^2`
    pub norm_sq: f64,
    /// `B = ∫ phi_u u^2`
    pub coupling: f64,
    /// `P = ||u||_p^p`
    pub power: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FiberCase {
    /// A local maximum `t-` followed by a local minimum `t+`.
    One,
    /// One degenerate critical point; `psi` is increasing.
    Two,
    /// No critical points; `psi` is increasing.
    Three,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberingReport {
    pub q: f64,
    pub case: FiberCase,
    pub t_minus: Option<f64>,
    pub t_plus: Option<f64>,
    pub t_inflect: Option<f64>,
    pub q_of_u: f64,
    pub q0_of_u: f64,
    pub t_of_u: f64,
    pub t0_of_u: f64,
    pub psi_at_roots: Vec<f64>,
}

pub fn fiber_coeffs(u: &RadialFunction, params: &ProblemParams) -> Result<FiberCoeffs> {
    if u.is_zero() {
        return Err(invalid("fiber map of the zero function"));
    }
    let sol = solve_potential(u, params)?;
    Ok(FiberCoeffs {
        norm_sq: h1_norm_sq(u, params),
        coupling: sol.b_coupling,
        power: lp_norm_p(u, params.p)?,
        p: params.p,
    })
}

impl FiberCoeffs {
    pub fn new(norm_sq: f64, coupling: f64, power: f64, p: f64) -> Result<Self> {
        let c = Self { norm_sq, coupling, power, p };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if !(ok(self.norm_sq) && ok(self.coupling) && ok(self.power)) {
            return Err(invalid(format!(
                "fiber coefficients must be positive and finite, got A={} B={} P={}",
                self.norm_sq, self.coupling, self.power
            )));
        }
        if !(self.p > 2.0 && self.p < 4.0) {
            return Err(invalid(format!("fiber exponent must lie in (2, 4), got {}", self.p)));
        }
        Ok(())
    }

    /// Coefficients of `c u`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            norm_sq: c * c * self.norm_sq,
            coupling: c.powi(4) * self.coupling,
            power: c.abs().powf(self.p) * self.power,
            p: self.p,
        }
    }

    pub fn psi(&self, q: f64, t: f64) -> f64 {
        0.5 * self.norm_sq * t * t + 0.25 * q * q * self.coupling * t.powi(4) - self.power / self.p * t.powf(self.p)
    }

    pub fn dpsi(&self, q: f64, t: f64) -> f64 {
        t * self.h(q, t)
    }

    pub fn d2psi(&self, q: f64, t: f64) -> f64 {
        self.norm_sq + 3.0 * q * q * self.coupling * t * t - (self.p - 1.0) * self.power * t.powf(self.p - 2.0)
    }

    /// `psi'(t) / t`.
    pub fn h(&self, q: f64, t: f64) -> f64 {
        self.norm_sq + q * q * self.coupling * t * t - self.power * t.powf(self.p - 2.0)
    }

    /// The unique minimiser of `h` on `t > 0`.
    pub fn t_h(&self, q: f64) -> f64 {
        ((self.p - 2.0) * self.power / (2.0 * q * q * self.coupling)).powf(1.0 / (4.0 - self.p))
    }
}

/// Bisection on a monotone bracket, run until the midpoint stops moving.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = f(lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (f(lo).abs(), f(hi).abs());
    if a <= b {
        lo
    } else {
        hi
    }
}

/// The two critical points `(t-, t+)` when the fiber is in case one.
pub fn fiber_roots(c: &FiberCoeffs, q: f64) -> Option<(f64, f64)> {
    let th = c.t_h(q);
    let hmin = c.h(q, th);
    if hmin >= -FIBER_ZERO_BAND * c.norm_sq {
        return None;
    }
    let h = |t: f64| c.h(q, t);
    let t_minus = bisect(h, 0.0, th);
    let mut hi = 2.0 * th;
    while h(hi) <= 0.0 {
        hi *= 2.0;
    }
    let t_plus = bisect(h, th, hi);
    Some((t_minus, t_plus))
}

pub fn classify_fiber(c: &FiberCoeffs, q: f64) -> Result<FiberingReport> {
    c.validate()?;
    if !(q > 0.0) || !q.is_finite() {
        return Err(invalid(format!("charge must be positive, got {q}")));
    }
    let (q_u, t_u) = q_of_u(c)?;
    let (q0_u, t0_u) = q0_of_u(c)?;
    let th = c.t_h(q);
    let hmin = c.h(q, th);
    let band = FIBER_ZERO_BAND * c.norm_sq;
    let (case, t_minus, t_plus, t_inflect) = if hmin.abs() <= band {
        (FiberCase::Two, None, None, Some(th))
    } else if hmin > 0.0 {
        (FiberCase::Three, None, None, None)
    } else {
        let (tm, tp) = fiber_roots(c, q).expect("h(t_h) < 0 brackets two roots");
        (FiberCase::One, Some(tm), Some(tp), None)
    };
    let psi_at_roots = [t_minus, t_plus, t_inflect].iter().flatten().map(|&t| c.psi(q, t)).collect();
    Ok(FiberingReport {
        q,
        case,
        t_minus,
        t_plus,
        t_inflect,
        q_of_u: q_u,
        q0_of_u: q0_u,
        t_of_u: t_u,
        t0_of_u: t0_u,
        psi_at_roots,
    })
}

/// The extremal charge `q(u)` at which the fiber has a degenerate critical
/// point, with its location `t(u)`. Derived from `psi'(t) = psi''(t) = 0`.
pub fn q_of_u(c: &FiberCoeffs) -> Result<(f64, f64)> {
    c.validate()?;
    let p = c.p;
    let t = (2.0 * c.norm_sq / ((4.0 - p) * c.power)).powf(1.0 / (p - 2.0));
    let q = (c.norm_sq * (p - 2.0) / ((4.0 - p) * c.coupling)).sqrt() / t;
    debug_assert!(((q - q_of_u_closed_form(c)?) / q).abs() < 1e-10);
    Ok((q, t))
}

/// The zero-energy charge `q0(u)` at which the fiber touches zero at a
/// critical point, with its location `t0(u)`. Derived from
/// `psi(t) = psi'(t) = 0`.
pub fn q0_of_u(c: &FiberCoeffs) -> Result<(f64, f64)> {
    c.validate()?;
    let p = c.p;
    let t0 = (p * c.norm_sq / ((4.0 - p) * c.power)).powf(1.0 / (p - 2.0));
    let q0 = (2.0 * (p - 2.0) * t0.powf(p - 4.0) * c.power / (p * c.coupling)).sqrt();
    debug_assert!(((q0 - q0_of_u_closed_form(c)?) / q0).abs() < 1e-10);
    Ok((q0, t0))
}

/// `C_p` and `C_{0,p}` in the closed forms
/// `q(u) = C_p ||u||_p^{p/(p-2)} / (||u||^{(4-p)/(p-2)} ||phi_u||_D)`.
pub fn constants(p: f64) -> Result<(f64, f64)> {
    if !(p > 2.0 && p <= 3.0) {
        return Err(invalid(format!("p must lie in (2, 3], got {p}")));
    }
    let common = (p - 2.0).sqrt() * PI.sqrt() * (4.0 - p).powf((4.0 - p) / (2.0 * (p - 2.0)));
    let c_p = 2.0 * common / 2f64.powf(1.0 / (p - 2.0));
    let c_0p = 2f64.powf(1.5) * common / p.powf(1.0 / (p - 2.0));
    assert!(c_0p < c_p, "C_0p must be below C_p");
    Ok((c_p, c_0p))
}

/// `q0(u) / q(u) = sqrt(2) (2/p)^{1/(p-2)}`, the same for every `u`.
pub fn zero_energy_ratio(p: f64) -> f64 {
    2f64.sqrt() * (2.0 / p).powf(1.0 / (p - 2.0))
}

fn closed_form_shape(c: &FiberCoeffs) -> f64 {
    let p = c.p;
    let d_norm = (4.0 * PI * c.coupling).sqrt();
    c.power.powf(1.0 / (p - 2.0)) / (c.norm_sq.powf((4.0 - p) / (2.0 * (p - 2.0))) * d_norm)
}

/// `q(u)` from the printed closed form with `C_p`.
pub fn q_of_u_closed_form(c: &FiberCoeffs) -> Result<f64> {
    let (c_p, _) = constants_unchecked(c.p);
    Ok(c_p * closed_form_shape(c))
}

/// `q0(u)` from the printed closed form with `C_{0,p}`.
pub fn q0_of_u_closed_form(c: &FiberCoeffs) -> Result<f64> {
    let (_, c_0p) = constants_unchecked(c.p);
    Ok(c_0p * closed_form_shape(c))
}

// The closed forms stay valid on (2, 4); only the public `constants` is
// restricted to the model range.
fn constants_unchecked(p: f64) -> (f64, f64) {
    let common = (p - 2.0).sqrt() * PI.sqrt() * (4.0 - p).powf((4.0 - p) / (2.0 * (p - 2.0)));
    (2.0 * common / 2f64.powf(1.0 / (p - 2.0)), 2f64.powf(1.5) * common / p.powf(1.0 / (p - 2.0)))
}

/// Nehari classification of `u` itself (the point `t = 1` on its fiber).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "set", content = "residual")]
pub enum NehariClass {
    Plus,
    Zero,
    Minus,
    /// `psi'(1)` is outside the zero band; carries its value.
    OffNehari(f64),
}

impl std::fmt::Display for NehariClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Plus => f.write_str("plus"),
            Self::Zero => f.write_str("zero"),
            Self::Minus => f.write_str("minus"),
            Self::OffNehari(_) => f.write_str("off"),
        }
    }
}

/// Zero band for `psi'(1)` and `psi''(1)`, relative to `max(1, A)`.
pub const NEHARI_ZERO_BAND: f64 = 1e-8;

pub fn nehari_class_of(c: &FiberCoeffs, q: f64) -> NehariClass {
    let band = NEHARI_ZERO_BAND * c.norm_sq.abs().max(1.0);
    let d1 = c.dpsi(q, 1.0);
    if d1.abs() > band {
        return NehariClass::OffNehari(d1);
    }
    let d2 = c.d2psi(q, 1.0);
    if d2.abs() <= band {
        NehariClass::Zero
    } else if d2 > 0.0 {
        NehariClass::Plus
    } else {
        NehariClass::Minus
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(p: f64) -> FiberCoeffs {
        FiberCoeffs::new(1.0, 1.0, 1.0, p).unwrap()
    }

    #[test]
    fn quadratic_case_one() {
        // p = 3: h(t) = 1 + 0.16 t^2 - t, roots 1.25 and 5
        let r = classify_fiber(&unit(3.0), 0.4).unwrap();
        assert_eq!(r.case, FiberCase::One);
        assert_relative_eq!(r.t_minus.unwrap(), 1.25, max_relative = 1e-12);
        assert_relative_eq!(r.t_plus.unwrap(), 5.0, max_relative = 1e-12);
        let c = unit(3.0);
        assert!(c.d2psi(0.4, 1.25) < 0.0 && c.d2psi(0.4, 5.0) > 0.0);
    }

    #[test]
    fn double_root_case_two() {
        let r = classify_fiber(&unit(3.0), 0.5).unwrap();
        assert_eq!(r.case, FiberCase::Two);
        assert_relative_eq!(r.t_inflect.unwrap(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn negative_discriminant_case_three() {
        let r = classify_fiber(&unit(3.0), 0.6).unwrap();
        assert_eq!(r.case, FiberCase::Three);
        assert!(r.t_minus.is_none() && r.t_plus.is_none() && r.psi_at_roots.is_empty());
    }

    #[test]
    fn extremal_values_for_unit_triple() {
        let (q, t) = q_of_u(&unit(3.0)).unwrap();
        assert_relative_eq!(t, 2.0, max_relative = 1e-12);
        assert_relative_eq!(q, 0.5, max_relative = 1e-12);
        let (q0, t0) = q0_of_u(&unit(3.0)).unwrap();
        assert_relative_eq!(t0, 3.0, max_relative = 1e-12);
        assert_relative_eq!(q0, 2f64.sqrt() / 3.0, max_relative = 1e-12);
        assert!(unit(3.0).psi(q0, 3.0).abs() < 1e-12);
        assert!(unit(3.0).dpsi(q0, 3.0).abs() < 1e-12);
    }

    #[test]
    fn constants_at_three() {
        let (cp, c0) = constants(3.0).unwrap();
        assert_relative_eq!(cp, PI.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(c0, 2.0 * 2f64.sqrt() / 3.0 * PI.sqrt(), max_relative = 1e-12);
        for p in [2.2, 2.5, 3.0] {
            let (cp, c0) = constants(p).unwrap();
            assert_relative_eq!(c0 / cp, zero_energy_ratio(p), max_relative = 1e-12);
        }
        assert!(constants(2.0).is_err());
        assert!(constants(3.1).is_err());
    }

    #[test]
    fn degenerate_coefficients_rejected() {
        assert!(FiberCoeffs::new(0.0, 1.0, 1.0, 3.0).is_err());
        let bad = FiberCoeffs { norm_sq: 1.0, coupling: 0.0, power: 1.0, p: 3.0 };
        assert!(q_of_u(&bad).is_err());
        assert!(q0_of_u(&bad).is_err());
        assert!(classify_fiber(&unit(3.0), 0.0).is_err());
    }

    #[test]
    fn nehari_classes_from_roots() {
        let c = unit(2.5);
        let (q, _) = q_of_u(&c).unwrap();
        let qq = 0.7 * q;
        let (tm, tp) = fiber_roots(&c, qq).unwrap();
        assert_eq!(nehari_class_of(&c.scaled(tp), qq), NehariClass::Plus);
        assert_eq!(nehari_class_of(&c.scaled(tm), qq), NehariClass::Minus);
        let (q, t) = q_of_u(&c).unwrap();
        assert_eq!(nehari_class_of(&c.scaled(t), q), NehariClass::Zero);
        assert!(matches!(nehari_class_of(&c, qq), NehariClass::OffNehari(_)));
    }

    // near p = 2 the fiber scales are powers 1/(p-2) of the coefficients and
    // leave the double range, so p starts at 2.1
    fn triple() -> impl Strategy<Value = FiberCoeffs> {
        (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0, 2.1f64..3.0).prop_map(|(a, b, c, p)| FiberCoeffs {
            norm_sq: 10f64.powf(a),
            coupling: 10f64.powf(b),
            power: 10f64.powf(c),
            p,
        })
    }

    proptest! {
        #[test]
        fn closed_forms_agree(c in triple()) {
            let (q, _) = q_of_u(&c).unwrap();
            let (q0, _) = q0_of_u(&c).unwrap();
            prop_assert!(((q - q_of_u_closed_form(&c).unwrap()) / q).abs() < 1e-12);
            prop_assert!(((q0 - q0_of_u_closed_form(&c).unwrap()) / q0).abs() < 1e-12);
            prop_assert!(q0 < q);
            prop_assert!(((q0 / q) - zero_energy_ratio(c.p)).abs() < 1e-12);
        }

        #[test]
        fn zero_homogeneity(c in triple(), s in 0.01f64..100.0) {
            let (q1, t1) = q_of_u(&c).unwrap();
            let (q2, t2) = q_of_u(&c.scaled(s)).unwrap();
            prop_assert!(((q1 - q2) / q1).abs() < 1e-12);
            prop_assert!(((t1 - s * t2) / t1).abs() < 1e-12);
            let (a, _) = q0_of_u(&c).unwrap();
            let (b, _) = q0_of_u(&c.scaled(s)).unwrap();
            prop_assert!(((a - b) / a).abs() < 1e-12);
        }

        #[test]
        fn case_one_roots_bracket(c in triple(), frac in 0.05f64..0.999) {
            let (qu, _) = q_of_u(&c).unwrap();
            let q = frac * qu;
            let r = classify_fiber(&c, q).unwrap();
            prop_assert_eq!(r.case, FiberCase::One);
            let (tm, tp) = (r.t_minus.unwrap(), r.t_plus.unwrap());
            let th = c.t_h(q);
            prop_assert!(0.0 < tm && tm < th && th < tp);
            prop_assert!(c.d2psi(q, tm) < 0.0 && c.d2psi(q, tp) > 0.0);
        }

        #[test]
        fn extremal_point_is_degenerate(c in triple()) {
            let (q, t) = q_of_u(&c).unwrap();
            let r = classify_fiber(&c, q).unwrap();
            prop_assert_eq!(r.case, FiberCase::Two);
            prop_assert!(((r.t_inflect.unwrap() - t) / t).abs() < 1e-10);
            let scale = c.norm_sq * t;
            prop_assert!(c.dpsi(q, t).abs() < 1e-10 * scale);
            prop_assert!(c.d2psi(q, t).abs() < 1e-10 * c.norm_sq);
            let (q0, t0) = q0_of_u(&c).unwrap();
            // cancellation is measured against the size of the individual terms
            let terms = c.norm_sq * t0 * t0
                + q0 * q0 * c.coupling * t0.powi(4)
                + c.power * t0.powf(c.p);
            prop_assert!(c.psi(q0, t0).abs() < 1e-10 * terms);
            prop_assert!(c.dpsi(q0, t0).abs() < 1e-10 * terms / t0);
        }
    }
}
