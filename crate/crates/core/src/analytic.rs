//! Closed-form detection statistics for a single photon interfering with a
//! weak coherent pulse on a balanced beam splitter, both outputs watched by
//! binary detectors with efficiency `η` and no-dark-count probability `ξ`.
//!
//! Everything observable depends on the setup only through the products
//! `ηp` and `η|β|²` (plus `ξ`), so the formulas are implemented once on
//! [`EffectiveParams`] and the [`SetupParams`] entry points reparameterize.
//! The one exception is [`z_expectation`], which needs the two detector
//! efficiencies separately and feeds the independent
//! [`coincidence_rate_composed`] route.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this detected intensity the exponential prefactors are handled in
/// log space.
const LOG_SPACE_THRESHOLD: f64 = 500.0;

/// Physical setup: preparation probability, detector efficiency,
/// no-dark-count probability and mean probe photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetupParams {
    pub p: f64,
    pub eta: f64,
    pub xi: f64,
    pub beta_sq: f64,
}

impl SetupParams {
    pub fn new(p: f64, eta: f64, xi: f64, beta_sq: f64) -> Result<Self> {
        let s = SetupParams {
            p,
            eta,
            xi,
            beta_sq,
        };
        s.validate()?;
        Ok(s)
    }

    /// Setup from the dark-count probability `d = 1 − ξ`.
    pub fn with_dark_count_prob(p: f64, eta: f64, dark: f64, beta_sq: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&dark) {
            return Err(Error::param("dark-count probability", dark, "must be in [0, 1)"));
        }
        Self::new(p, eta, 1.0 - dark, beta_sq)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param("p", self.p, "must be in [0, 1]"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::param("eta", self.eta, "must be in (0, 1]"));
        }
        check_xi(self.xi)?;
        if !(self.beta_sq >= 0.0 && self.beta_sq.is_finite()) {
            return Err(Error::param("beta_sq", self.beta_sq, "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn effective(&self) -> EffectiveParams {
        reparameterize(self)
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::param("xi", xi, "must be in (0, 1]"));
    }
    Ok(())
}

fn check_overlap(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param("T", t, "overlap must be in [0, 1]"));
    }
    Ok(())
}

/// The triple `(ηp, η|β|², ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub eta_p: f64,
    pub eta_beta_sq: f64,
    pub xi: f64,
}

/// `1 − ξe^{−x/2}` and `1 − ξ(1−ηp)e^{−x/2}`, without cancellation near x = 0.
struct Factors {
    decay: f64,
    a: f64,
    b: f64,
}

impl EffectiveParams {
    pub fn new(eta_p: f64, eta_beta_sq: f64, xi: f64) -> Result<Self> {
        let e = EffectiveParams {
            eta_p,
            eta_beta_sq,
            xi,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta_p) {
            return Err(Error::param("eta_p", self.eta_p, "must be in [0, 1]"));
        }
        if !(self.eta_beta_sq >= 0.0 && self.eta_beta_sq.is_finite()) {
            return Err(Error::param(
                "eta_beta_sq",
                self.eta_beta_sq,
                "must be finite and >= 0",
            ));
        }
        check_xi(self.xi)
    }

    fn factors(&self) -> Factors {
        let half = 0.5 * self.eta_beta_sq;
        let decay = (-half).exp();
        let a = (1.0 - self.xi) - self.xi * (-half).exp_m1();
        let b = a + self.xi * self.eta_p * decay;
        Factors { decay, a, b }
    }

    /// True when no light and no dark count can ever produce a click pair.
    fn is_dark(&self) -> bool {
        self.xi == 1.0 && self.eta_beta_sq == 0.0
    }

    /// `R_C(T) = 1 − ξ(2 − ηp + ½η²p|β|²T)e^{−η|β|²/2} + ξ²(1 − ηp)e^{−η|β|²}`.
    ///
    /// Evaluated as `(1 − ξe)(1 − ξ(1−ηp)e) − ½ξ·ηp·η|β|²·e·T`, which is the
    /// same polynomial in `e = e^{−η|β|²/2}` but keeps full relative precision
    /// when the rate is small.
    pub fn coincidence_rate(&self, t: f64) -> Result<f64> {
        check_overlap(t)?;
        let f = self.factors();
        let rate = f.a * f.b - self.interference_term(&f) * t;
        debug_assert!(
            (-1e-12..=1.0 + 1e-12).contains(&rate),
            "coincidence rate {rate} out of range for {self:?}"
        );
        Ok(rate.clamp(0.0, 1.0))
    }

    /// `½ ξ ηp η|β|² e^{−η|β|²/2}`: the drop of `R_C` per unit overlap.
    fn interference_term(&self, f: &Factors) -> f64 {
        if self.eta_beta_sq > LOG_SPACE_THRESHOLD {
            if self.eta_p == 0.0 {
                return 0.0;
            }
            let ln = (0.5 * self.xi * self.eta_p * self.eta_beta_sq).ln() - 0.5 * self.eta_beta_sq;
            ln.exp()
        } else {
            0.5 * self.xi * self.eta_p * self.eta_beta_sq * f.decay
        }
    }

    pub fn visibility(&self, t: f64) -> Result<f64> {
        check_overlap(t)?;
        let r0 = self.coincidence_rate(0.0)?;
        if self.is_dark() || r0 <= 0.0 {
            return Err(Error::UndefinedVisibility);
        }
        let rt = self.coincidence_rate(t)?;
        Ok((r0 - rt) / r0)
    }

    /// `c_f = ξη²p|β|²e^{−η|β|²/2} / (2[1 − ξ(1−ηp)e^{−η|β|²/2}][1 − ξe^{−η|β|²/2}])`.
    pub fn correction_factor(&self) -> Result<f64> {
        if self.is_dark() {
            return Err(Error::LimitUndefined);
        }
        let f = self.factors();
        let denom = f.a * f.b;
        if denom <= 0.0 {
            return Err(Error::LimitUndefined);
        }
        Ok(self.interference_term(&f) / denom)
    }

    /// First-order expansion `1 − (1/(2ηp) − ¼)η|β|²`, valid without dark counts.
    pub fn correction_factor_small_beta(&self) -> Result<f64> {
        if self.xi != 1.0 {
            return Err(Error::ExpansionDomain { xi: self.xi });
        }
        if self.eta_p <= 0.0 {
            return Err(Error::param("eta_p", self.eta_p, "expansion needs eta_p > 0"));
        }
        Ok(1.0 - (0.5 / self.eta_p - 0.25) * self.eta_beta_sq)
    }

    /// `c_f √R_C(0)`, the reciprocal of the relative overlap uncertainty up
    /// to a constant. Larger is better.
    pub fn figure_of_merit(&self) -> Result<f64> {
        let cf = self.correction_factor()?;
        Ok(cf * self.coincidence_rate(0.0)?.sqrt())
    }
}

pub fn reparameterize(s: &SetupParams) -> EffectiveParams {
    EffectiveParams {
        eta_p: s.eta * s.p,
        eta_beta_sq: s.eta * s.beta_sq,
        xi: s.xi,
    }
}

/// `⟨Z(η_c, η_d)⟩ = (1 − ½(η_c+η_d)p + ¼(η_c−η_d)²p|β|²T) e^{−(η_c+η_d)|β|²/2}`.
pub fn z_expectation(s: &SetupParams, eta_c: f64, eta_d: f64, t: f64) -> Result<f64> {
    s.validate()?;
    for (name, v) in [("eta_c", eta_c), ("eta_d", eta_d)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::param(name, v, "must be in [0, 1]"));
        }
    }
    check_overlap(t)?;
    let sum = eta_c + eta_d;
    let diff = eta_c - eta_d;
    let bracket = 1.0 - 0.5 * sum * s.p + 0.25 * diff * diff * s.p * s.beta_sq * t;
    Ok(bracket * (-0.5 * sum * s.beta_sq).exp())
}

pub fn coincidence_rate(s: &SetupParams, t: f64) -> Result<f64> {
    s.validate()?;
    s.effective().coincidence_rate(t)
}

/// `1 − ξ[⟨Z(η,0)⟩ + ⟨Z(0,η)⟩] + ξ²⟨Z(η,η)⟩`, built from [`z_expectation`].
pub fn coincidence_rate_composed(s: &SetupParams, t: f64) -> Result<f64> {
    let z_c = z_expectation(s, s.eta, 0.0, t)?;
    let z_d = z_expectation(s, 0.0, s.eta, t)?;
    let z_cd = z_expectation(s, s.eta, s.eta, t)?;
    Ok(1.0 - s.xi * (z_c + z_d) + s.xi * s.xi * z_cd)
}

/// `V = (R_C(0) − R_C(T)) / R_C(0)`.
pub fn visibility(s: &SetupParams, t: f64) -> Result<f64> {
    s.validate()?;
    s.effective().visibility(t)
}

pub fn correction_factor(s: &SetupParams) -> Result<f64> {
    s.validate()?;
    s.effective().correction_factor()
}

pub fn correction_factor_small_beta(s: &SetupParams) -> Result<f64> {
    s.validate()?;
    s.effective().correction_factor_small_beta()
}

pub fn figure_of_merit(s: &SetupParams) -> Result<f64> {
    s.validate()?;
    s.effective().figure_of_merit()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(p: f64, eta: f64, xi: f64, beta_sq: f64) -> SetupParams {
        SetupParams::new(p, eta, xi, beta_sq).unwrap()
    }

    /// The rate exactly as printed, term by term.
    fn printed_rate(s: &SetupParams, t: f64) -> f64 {
        let (p, eta, xi, b2) = (s.p, s.eta, s.xi, s.beta_sq);
        1.0 - xi * (2.0 - eta * p + 0.5 * eta * eta * p * b2 * t) * (-eta * b2 / 2.0).exp()
            + xi * xi * (1.0 - eta * p) * (-eta * b2).exp()
    }

    #[test]
    fn reparameterize_products() {
        let e = reparameterize(&s(1.0, 1.0, 1.0, 1.0));
        assert_eq!((e.eta_p, e.eta_beta_sq, e.xi), (1.0, 1.0, 1.0));
        let e = reparameterize(&s(0.5, 0.2, 0.99, 5.0));
        assert!((e.eta_p - 0.1).abs() < 1e-15);
        assert!((e.eta_beta_sq - 1.0).abs() < 1e-15);
        assert_eq!(e.xi, 0.99);
        let e = reparameterize(&s(0.0, 0.5, 1.0, 0.0));
        assert_eq!((e.eta_p, e.eta_beta_sq, e.xi), (0.0, 0.0, 1.0));
    }

    #[test]
    fn parameter_domains() {
        assert!(SetupParams::new(1.1, 1.0, 1.0, 1.0).is_err());
        assert!(SetupParams::new(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(SetupParams::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(SetupParams::new(1.0, 1.0, 1.0, -1.0).is_err());
        assert!(SetupParams::new(1.0, 1.0, 1.0, f64::INFINITY).is_err());
        let d = SetupParams::with_dark_count_prob(1.0, 1.0, 0.01, 1.0).unwrap();
        assert_eq!(d.xi, 0.99);
        assert!(coincidence_rate(&s(1.0, 1.0, 1.0, 1.0), 1.5).is_err());
        assert!(z_expectation(&s(1.0, 1.0, 1.0, 1.0), 1.2, 0.0, 0.0).is_err());
    }

    #[test]
    fn z_expectation_values() {
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(z_expectation(&s(0.4, 0.7, 0.9, 1.3), 0.0, 0.0, t).unwrap(), 1.0);
            assert_eq!(z_expectation(&s(1.0, 1.0, 1.0, 1.0), 1.0, 1.0, t).unwrap(), 0.0);
        }
        // bracket: 1 - 0.5*0.5 + 0.25*0.5*2*1 = 1
        let z = z_expectation(&s(0.5, 1.0, 1.0, 2.0), 1.0, 0.0, 1.0).unwrap();
        assert!((z - (-1.0f64).exp()).abs() < 1e-15);
        assert!((z - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn coincidence_rate_values() {
        for t in [0.0, 0.5, 1.0] {
            assert_eq!(coincidence_rate(&s(1.0, 1.0, 1.0, 0.0), t).unwrap(), 0.0);
        }
        let r0 = coincidence_rate(&s(1.0, 1.0, 1.0, 1.0), 0.0).unwrap();
        assert!((r0 - (1.0 - (-0.5f64).exp())).abs() < 1e-15);
        assert!((r0 - 0.393469).abs() < 1e-6);
        let r1 = coincidence_rate(&s(1.0, 1.0, 1.0, 1.0), 1.0).unwrap();
        assert!((r1 - (1.0 - 1.5 * (-0.5f64).exp())).abs() < 1e-15);
        assert!((r1 - 0.090204).abs() < 1e-6);
    }

    #[test]
    fn composed_route_values() {
        let r = coincidence_rate_composed(&s(1.0, 1.0, 1.0, 1.0), 1.0).unwrap();
        assert!((r - 0.090204).abs() < 1e-6);
        for xi in [0.9, 0.95, 0.999] {
            let r = coincidence_rate_composed(&s(0.0, 0.6, xi, 0.0), 0.7).unwrap();
            assert!((r - (1.0 - xi).powi(2)).abs() < 1e-15);
            let r = coincidence_rate(&s(0.0, 0.6, xi, 0.0), 0.7).unwrap();
            assert!((r - (1.0 - xi).powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn visibility_values() {
        let base = s(1.0, 1.0, 1.0, 1.0);
        assert_eq!(visibility(&base, 0.0).unwrap(), 0.0);
        let v = visibility(&base, 1.0).unwrap();
        assert!((v - 0.770748).abs() < 1e-6);
        assert!(matches!(
            visibility(&s(1.0, 1.0, 1.0, 0.0), 1.0),
            Err(Error::UndefinedVisibility)
        ));
        // dark counts alone make the reference rate nonzero
        assert_eq!(visibility(&s(1.0, 1.0, 0.99, 0.0), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn correction_factor_values() {
        let base = s(1.0, 1.0, 1.0, 1.0);
        let cf = correction_factor(&base).unwrap();
        assert!((cf - visibility(&base, 1.0).unwrap()).abs() < 1e-15);
        assert!((cf - 0.770748).abs() < 1e-6);

        let cf = correction_factor(&s(1.0, 1.0, 0.99, 0.26)).unwrap();
        assert!((cf - 0.8648).abs() < 5e-5);

        for eta_p in [0.5, 1.0] {
            let e = EffectiveParams::new(eta_p, 1e-4, 1.0).unwrap();
            let expected = 1.0 - (0.5 / eta_p - 0.25) * 1e-4;
            assert!((e.correction_factor().unwrap() - expected).abs() < 1e-7);
        }

        assert!(matches!(
            correction_factor(&s(0.7, 0.9, 1.0, 0.0)),
            Err(Error::LimitUndefined)
        ));
        assert_eq!(correction_factor(&s(0.7, 0.9, 0.95, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn small_beta_expansion() {
        let e = EffectiveParams::new(0.5, 0.01, 1.0).unwrap();
        let approx = e.correction_factor_small_beta().unwrap();
        assert!((approx - 0.9925).abs() < 1e-15);
        assert!((e.correction_factor().unwrap() - approx).abs() < 1e-4);
        let e = EffectiveParams::new(0.37, 0.0, 1.0).unwrap();
        assert_eq!(e.correction_factor_small_beta().unwrap(), 1.0);
        let e = EffectiveParams::new(0.4, 0.1, 0.95).unwrap();
        assert!(matches!(
            e.correction_factor_small_beta(),
            Err(Error::ExpansionDomain { .. })
        ));
    }

    #[test]
    fn expansion_error_is_second_order() {
        for eta_p in [0.1, 0.5, 1.0] {
            let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&x| {
                    let e = EffectiveParams::new(eta_p, x, 1.0).unwrap();
                    (e.correction_factor().unwrap() - e.correction_factor_small_beta().unwrap()).abs()
                        / (x * x)
                })
                .collect();
            // ratio settles: successive values within 10% of each other
            assert!((ratios[1] / ratios[0] - 1.0).abs() < 0.1, "{ratios:?}");
            assert!((ratios[2] / ratios[1] - 1.0).abs() < 0.1, "{ratios:?}");
        }
    }

    #[test]
    fn figure_of_merit_values() {
        let g = figure_of_merit(&s(1.0, 1.0, 1.0, 1.0)).unwrap();
        let cf = 1.0 - 1.5 * (-0.5f64).exp();
        let expected = (1.0 - cf / (1.0 - (-0.5f64).exp())) * (1.0 - (-0.5f64).exp()).sqrt();
        assert!((g - expected).abs() < 1e-14);
        assert!((g - 0.483468).abs() < 1e-6);
        assert!(figure_of_merit(&s(1.0, 1.0, 1.0, 1e-10)).unwrap() < 1e-4);
        assert!(figure_of_merit(&s(1.0, 1.0, 1.0, 80.0)).unwrap() < 1e-6);
        assert!(figure_of_merit(&s(1.0, 1.0, 1.0, 2000.0)).unwrap() >= 0.0);
    }

    #[test]
    fn dark_count_floor() {
        for xi in [0.5, 0.9, 0.99, 1.0] {
            let r = coincidence_rate(&s(0.0, 0.8, xi, 0.0), 0.0).unwrap();
            assert_eq!(r, (1.0 - xi) * (1.0 - xi));
        }
    }

    fn setup() -> impl Strategy<Value = SetupParams> {
        (0.0..=1.0f64, 0.01..=1.0f64, 0.5..=1.0f64, 0.0..=6.0f64)
            .prop_map(|(p, eta, xi, b)| SetupParams::new(p, eta, xi, b).unwrap())
    }

    proptest! {
        #[test]
        fn matches_printed_formula(s in setup(), t in 0.0..=1.0f64) {
            let r = coincidence_rate(&s, t).unwrap();
            prop_assert!((r - printed_rate(&s, t)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn composed_equals_closed_form(s in setup(), t in 0.0..=1.0f64) {
            let a = coincidence_rate(&s, t).unwrap();
            let b = coincidence_rate_composed(&s, t).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn visibility_is_proportional(s in setup(), t in 0.0..=1.0f64) {
            prop_assume!(!(s.xi == 1.0 && s.beta_sq == 0.0));
            let v = visibility(&s, t).unwrap();
            let cf = correction_factor(&s).unwrap();
            prop_assert!((v - cf * t).abs() < 1e-12);
        }

        #[test]
        fn rate_strictly_decreasing_in_overlap(
            p in 0.01..=1.0f64, eta in 0.01..=1.0f64, xi in 0.5..=1.0f64,
            b in 0.01..=6.0f64, t in 0.0..0.9f64,
        ) {
            let s = SetupParams::new(p, eta, xi, b).unwrap();
            prop_assert!(coincidence_rate(&s, t + 0.1).unwrap() < coincidence_rate(&s, t).unwrap());
        }

        #[test]
        fn correction_factor_below_one_with_dark_counts(
            eta_p in 0.0..=1.0f64, x in 1e-6..=20.0f64, xi in 0.5..0.999_999f64,
        ) {
            let cf = EffectiveParams::new(eta_p, x, xi).unwrap().correction_factor().unwrap();
            prop_assert!((0.0..1.0).contains(&cf));
        }

        #[test]
        fn correction_factor_in_unit_interval_without_dark_counts(
            eta_p in 1e-3..=1.0f64, x in 1e-6..=20.0f64,
        ) {
            let cf = EffectiveParams::new(eta_p, x, 1.0).unwrap().correction_factor().unwrap();
            prop_assert!(cf > 0.0 && cf <= 1.0);
        }

        #[test]
        fn only_products_matter(
            eta_p in 0.01..=0.5f64, x in 0.0..=3.0f64, xi in 0.9..=1.0f64,
            k in 0.1..=1.0f64, t in 0.0..=1.0f64,
        ) {
            // (p, eta) = (eta_p / eta, eta) for two efficiencies eta = 1 and eta = k
            let a = SetupParams::new(eta_p, 1.0, xi, x).unwrap();
            let b = SetupParams::new((eta_p / k).min(1.0), k, xi, x / k).unwrap();
            prop_assume!(eta_p / k <= 1.0);
            let (ea, eb) = (a.effective(), b.effective());
            let tol = 1e-14;
            prop_assert!((coincidence_rate(&a, t).unwrap() - coincidence_rate(&b, t).unwrap()).abs() < tol);
            if x > 0.0 {
                prop_assert!((visibility(&a, t).unwrap() - visibility(&b, t).unwrap()).abs() < tol);
                prop_assert!((correction_factor(&a).unwrap() - correction_factor(&b).unwrap()).abs() < tol);
                prop_assert!((figure_of_merit(&a).unwrap() - figure_of_merit(&b).unwrap()).abs() < tol);
            }
            prop_assert!((ea.eta_p - eb.eta_p).abs() < 1e-15);
        }
    }
}
