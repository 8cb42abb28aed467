//! Mean-field model of the cascaded cavity: operating parameters, regime
//! classification and closed-form steady states.
//!
//! The cavity holds four resonant modes. A classical field of amplitude
//! `epsilon` drives the pump mode (loss rate `gamma0`). Downconversion
//! splits pump photons into modes 1 and 3 with effective coupling `chi1`,
//! and sum-frequency generation combines the pump with mode 3 into mode 2
//! with coupling `chi2`. All rates are quoted in units of the mode-1 loss
//! rate, so `gamma1 = 1` in typical configurations.
//!
//! The noiseless equations for the mode amplitudes are
//!
//! ```text
//! da1/dt = -gamma1 a1 + chi1 conj(a3) b
//! da2/dt = -gamma2 a2 + chi2 a3 b
//! da3/dt = -gamma3 a3 + chi1 conj(a1) b - chi2 a2 conj(b)
//! db/dt  = epsilon - gamma0 b - chi1 a1 a3 - chi2 a2 conj(a3)
//! ```
//!
//! Whether these equations have an oscillation threshold depends on the
//! competition between the two processes: downconversion alone has one,
//! sum-frequency generation alone does not.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss rates, couplings and pump amplitude defining one operating point.
///
/// Invariants: every loss rate is strictly positive, `chi1 > 0`,
/// `chi2 >= 0` and `epsilon >= 0` (the pump phase is taken real).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub chi1: f64,
    pub chi2: f64,
    pub epsilon: f64,
}

impl SystemParams {
    pub fn new(
        gamma0: f64,
        gamma1: f64,
        gamma2: f64,
        gamma3: f64,
        chi1: f64,
        chi2: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let p = Self { gamma0, gamma1, gamma2, gamma3, chi1, chi2, epsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.gamma0,
            self.gamma1,
            self.gamma2,
            self.gamma3,
            self.chi1,
            self.chi2,
            self.epsilon,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if self.gamma0 <= 0.0 || self.gamma1 <= 0.0 || self.gamma2 <= 0.0 || self.gamma3 <= 0.0 {
            return Err(Error::InvalidParams("loss rates must be strictly positive".into()));
        }
        if self.chi1 <= 0.0 {
            return Err(Error::InvalidParams("chi1 must be strictly positive".into()));
        }
        if self.chi2 < 0.0 {
            return Err(Error::InvalidParams("chi2 must be non-negative".into()));
        }
        if self.epsilon < 0.0 {
            return Err(Error::InvalidParams("epsilon must be non-negative".into()));
        }
        Ok(())
    }

    /// Copy with a different pump amplitude. Used by sweeps.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..*self }
    }

    /// Copy with a different sum-frequency coupling. Used by sweeps.
    pub fn with_chi2(&self, chi2: f64) -> Self {
        Self { chi2, ..*self }
    }
}

/// Relative tolerance for detecting the exact regime boundary
/// `chi1^2 gamma2 = chi2^2 gamma1` in floating point.
const CRITICAL_REL_TOL: f64 = 1e-13;

/// Operating regime of the classical equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `chi1^2 gamma2 > chi2^2 gamma1`: a finite threshold pump exists.
    WithThreshold,
    /// `chi1^2 gamma2 < chi2^2 gamma1`: the signal modes never oscillate.
    NoThreshold,
    /// The measure-zero boundary between the two. Steady states follow
    /// the no-threshold branch here.
    Critical,
}

/// Threshold data for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: Regime,
    /// Threshold pump amplitude. Finite only in the threshold regime.
    pub eps_c: Option<f64>,
    /// Threshold of the downconversion process in isolation,
    /// `gamma0 sqrt(gamma1 gamma3) / chi1`.
    pub eps_c_opo: f64,
    /// Coupling boundary `chi1 sqrt(gamma2 / gamma1)` separating the
    /// two regimes.
    pub chi2_crit: f64,
}

/// Classify the operating regime and compute its threshold quantities.
pub fn classify_regime(params: &SystemParams) -> RegimeReport {
    let lhs = params.chi1 * params.chi1 * params.gamma2;
    let rhs = params.chi2 * params.chi2 * params.gamma1;
    let scale = lhs.max(rhs);
    let regime = if (lhs - rhs).abs() <= CRITICAL_REL_TOL * scale {
        Regime::Critical
    } else if lhs > rhs {
        Regime::WithThreshold
    } else {
        Regime::NoThreshold
    };
    let eps_c = match regime {
        Regime::WithThreshold => {
            let denom = params.chi1 * params.chi1 / params.gamma1
                - params.chi2 * params.chi2 / params.gamma2;
            Some(params.gamma0 * params.gamma3.sqrt() / denom.sqrt())
        }
        _ => None,
    };
    RegimeReport {
        regime,
        eps_c,
        eps_c_opo: params.gamma0 * (params.gamma1 * params.gamma3).sqrt() / params.chi1,
        chi2_crit: params.chi1 * (params.gamma2 / params.gamma1).sqrt(),
    }
}

/// Sign choice for the above-threshold solution family. The mean-field
/// equations fix only the relative signs, so both branches are physical
/// and map into each other under negation of every signal amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// A classical steady state of the mean-field equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub beta: Complex64,
    pub alpha1: Complex64,
    pub alpha2: Complex64,
    pub alpha3: Complex64,
    /// Free phase of the oscillating solution. Zero below threshold.
    pub theta: f64,
    pub branch: Branch,
    pub above_threshold: bool,
}

impl SteadyState {
    /// Largest amplitude magnitude among the four modes.
    pub fn max_amplitude(&self) -> f64 {
        self.beta
            .norm()
            .max(self.alpha1.norm())
            .max(self.alpha2.norm())
            .max(self.alpha3.norm())
    }
}

/// Closed-form steady state for the given branch and phase convention.
///
/// Below threshold (and everywhere in the no-threshold regime) the signal
/// modes are empty and the pump saturates at `epsilon / gamma0`. Above
/// threshold the pump clamps and the signal amplitudes grow with the
/// square root of the pump excess; `theta` parameterizes the free phase
/// of that family and deterministic callers fix it to zero.
pub fn steady_state(params: &SystemParams, branch: Branch, theta: f64) -> Result<SteadyState> {
    params.validate()?;
    if !theta.is_finite() {
        return Err(Error::InvalidParams("theta must be finite".into()));
    }
    let report = classify_regime(params);
    let oscillating = matches!(report.eps_c, Some(eps_c) if params.epsilon > eps_c);
    if !oscillating {
        return Ok(SteadyState {
            beta: Complex64::new(params.epsilon / params.gamma0, 0.0),
            alpha1: Complex64::ZERO,
            alpha2: Complex64::ZERO,
            alpha3: Complex64::ZERO,
            theta,
            branch,
            above_threshold: false,
        });
    }
    let eps_c = report.eps_c.expect("threshold regime");
    let diff = params.chi1 * params.chi1 / params.gamma1 - params.chi2 * params.chi2 / params.gamma2;
    let sum = params.chi1 * params.chi1 / params.gamma1 + params.chi2 * params.chi2 / params.gamma2;
    let beta_ss = (params.gamma3 / diff).sqrt();
    let common = ((params.epsilon - eps_c) / (eps_c / params.gamma0 * sum)).sqrt();
    let sign = branch.sign();
    let phase_plus = Complex64::from_polar(1.0, theta);
    let phase_minus = Complex64::from_polar(1.0, -theta);
    Ok(SteadyState {
        beta: Complex64::new(beta_ss, 0.0),
        alpha1: sign * params.chi1 / params.gamma1 * beta_ss * common * phase_minus,
        alpha2: sign * params.chi2 / params.gamma2 * beta_ss * common * phase_plus,
        alpha3: sign * common * phase_plus,
        theta,
        branch,
        above_threshold: true,
    })
}

/// Right-hand sides of the noiseless mean-value equations, in the order
/// (da1, da2, da3, db).
pub fn mean_field_rhs(
    params: &SystemParams,
    alpha1: Complex64,
    alpha2: Complex64,
    alpha3: Complex64,
    beta: Complex64,
) -> [Complex64; 4] {
    [
        -params.gamma1 * alpha1 + params.chi1 * alpha3.conj() * beta,
        -params.gamma2 * alpha2 + params.chi2 * alpha3 * beta,
        -params.gamma3 * alpha3 + params.chi1 * alpha1.conj() * beta
            - params.chi2 * alpha2 * beta.conj(),
        Complex64::new(params.epsilon, 0.0) - params.gamma0 * beta
            - params.chi1 * alpha1 * alpha3
            - params.chi2 * alpha2 * alpha3.conj(),
    ]
}

/// Euclidean norm of the mean-field right-hand sides at `state`.
/// Vanishes exactly on a steady state; used as a self-check oracle.
pub fn mean_field_residual(params: &SystemParams, state: &SteadyState) -> f64 {
    let rhs = mean_field_rhs(params, state.alpha1, state.alpha2, state.alpha3, state.beta);
    rhs.iter().map(|r| r.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard(epsilon: f64) -> SystemParams {
        SystemParams::new(1.0, 1.0, 3.0, 1.0, 0.01, 0.004, epsilon).unwrap()
    }

    // Frozen with 40-digit arithmetic from the closed forms.
    const EPS_C: f64 = 102.778_306_474_129_747_868_540_5;
    const BETA_HALF: f64 = 51.389_153_237_064_873_934_270_25;

    #[test]
    fn regime_standard_has_threshold() {
        let rep = classify_regime(&standard(0.0));
        assert_eq!(rep.regime, Regime::WithThreshold);
        let eps_c = rep.eps_c.unwrap();
        assert!((eps_c - EPS_C).abs() / EPS_C < 1e-14);
        assert!((rep.eps_c_opo - 100.0).abs() < 1e-12);
        assert!((rep.chi2_crit - 0.01 * 3.0f64.sqrt()).abs() < 1e-17);
        assert!(eps_c > rep.eps_c_opo);
    }

    #[test]
    fn regime_large_chi2_has_no_threshold() {
        let p = standard(0.0).with_chi2(0.025);
        let rep = classify_regime(&p);
        assert_eq!(rep.regime, Regime::NoThreshold);
        assert!(rep.eps_c.is_none());
    }

    #[test]
    fn regime_chi2_zero_reduces_to_opo() {
        let p = standard(0.0).with_chi2(0.0);
        let rep = classify_regime(&p);
        assert_eq!(rep.regime, Regime::WithThreshold);
        assert!((rep.eps_c.unwrap() - 100.0).abs() < 1e-10);
        assert!((rep.eps_c.unwrap() - rep.eps_c_opo).abs() < 1e-12);
    }

    #[test]
    fn regime_boundary_is_critical() {
        let base = standard(0.0);
        let rep = classify_regime(&base);
        let p = base.with_chi2(rep.chi2_crit);
        assert_eq!(classify_regime(&p).regime, Regime::Critical);
        // and the critical point produces a trivial steady state
        let st = steady_state(&p.with_epsilon(500.0), Branch::Plus, 0.0).unwrap();
        assert!(!st.above_threshold);
        assert_eq!(st.alpha3, Complex64::ZERO);
    }

    #[test]
    fn steady_below_threshold() {
        let st = steady_state(&standard(0.5 * EPS_C), Branch::Plus, 0.0).unwrap();
        assert!(!st.above_threshold);
        assert!((st.beta.re - BETA_HALF).abs() < 1e-12);
        assert_eq!(st.beta.im, 0.0);
        assert_eq!(st.alpha1, Complex64::ZERO);
        assert_eq!(st.alpha2, Complex64::ZERO);
        assert_eq!(st.alpha3, Complex64::ZERO);
    }

    #[test]
    fn steady_above_threshold_matches_closed_form() {
        // Frozen 40-digit values at epsilon = 1.5 eps_c.
        let st = steady_state(&standard(1.5 * EPS_C), Branch::Plus, 0.0).unwrap();
        assert!(st.above_threshold);
        assert!((st.beta.norm_sqr() - 10_563.380_281_690_140_845).abs() / 1e4 < 1e-12);
        assert!((st.alpha1.norm_sqr() - 5_014.262_791_941_522_553).abs() / 5e3 < 1e-12);
        assert!((st.alpha2.norm_sqr() - 89.142_449_634_515_956_498).abs() / 89.0 < 1e-12);
        assert!((st.alpha3.norm_sqr() - 4_746.835_443_037_974_683_5).abs() / 4.7e3 < 1e-12);
        assert!(mean_field_residual(&standard(1.5 * EPS_C), &st) < 1e-10);
    }

    #[test]
    fn steady_empty_cavity() {
        let st = steady_state(&standard(0.0), Branch::Plus, 0.0).unwrap();
        assert_eq!(st.beta, Complex64::ZERO);
        assert_eq!(st.alpha3, Complex64::ZERO);
        assert_eq!(mean_field_residual(&standard(0.0), &st), 0.0);
    }

    #[test]
    fn steady_rejects_bad_losses() {
        let mut p = standard(1.0);
        p.gamma2 = 0.0;
        assert!(matches!(
            steady_state(&p, Branch::Plus, 0.0),
            Err(Error::InvalidParams(_))
        ));
        p.gamma2 = -1.0;
        assert!(steady_state(&p, Branch::Plus, 0.0).is_err());
    }

    #[test]
    fn residual_of_zero_state_equals_pump() {
        let zero = SteadyState {
            beta: Complex64::ZERO,
            alpha1: Complex64::ZERO,
            alpha2: Complex64::ZERO,
            alpha3: Complex64::ZERO,
            theta: 0.0,
            branch: Branch::Plus,
            above_threshold: false,
        };
        assert_eq!(mean_field_residual(&standard(10.0), &zero), 10.0);
        assert_eq!(mean_field_residual(&standard(0.0), &zero), 0.0);
    }

    #[test]
    fn threshold_is_continuous_from_above() {
        // alpha3^2 -> 0 as epsilon -> eps_c from above
        let mut prev = f64::INFINITY;
        for delta in [1e-2, 1e-4, 1e-6, 1e-8] {
            let st = steady_state(&standard(EPS_C * (1.0 + delta)), Branch::Plus, 0.0).unwrap();
            let a3sq = st.alpha3.norm_sqr();
            assert!(a3sq < prev);
            prev = a3sq;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn branch_symmetry() {
        let p = standard(1.5 * EPS_C);
        let plus = steady_state(&p, Branch::Plus, 0.3).unwrap();
        let minus = steady_state(&p, Branch::Minus, 0.3).unwrap();
        assert_eq!(plus.alpha1, -minus.alpha1);
        assert_eq!(plus.alpha2, -minus.alpha2);
        assert_eq!(plus.alpha3, -minus.alpha3);
        assert_eq!(plus.beta, minus.beta);
        let r_plus = mean_field_residual(&p, &plus);
        let r_minus = mean_field_residual(&p, &minus);
        assert!((r_plus - r_minus).abs() < 1e-14);
    }

    #[test]
    fn opo_reduction_at_chi2_zero() {
        let p = standard(150.0).with_chi2(0.0);
        let st = steady_state(&p, Branch::Plus, 0.0).unwrap();
        assert!(st.above_threshold);
        assert_eq!(st.alpha2, Complex64::ZERO);
        assert!(mean_field_residual(&p, &st) < 1e-10);
        // pump clamps at the isolated-downconversion threshold value
        assert!((st.beta.re - 100.0).abs() < 1e-10);
    }
}
