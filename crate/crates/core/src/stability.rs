//! Linear stability analysis about a classical steady state.
//!
//! Fluctuations are tracked in the doubled phase space with variable
//! ordering
//!
//! ```text
//! (da1, da1+, da2, da2+, da3, da3+, db, db+)
//! ```
//!
//! and obey `d(dx)/dt = -A dx + B dW`, so stability requires every
//! eigenvalue of the drift matrix `A` to have a positive real part.
//! The noise enters only through `D = B B^T`, which is what the spectral
//! routines consume, so `D` is assembled directly instead of a factor `B`.

use nalgebra::SMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{classify_regime, steady_state, Branch, Regime, SteadyState, SystemParams};

pub type Matrix8 = SMatrix<Complex64, 8, 8>;

/// Maximum mean-field residual accepted when linearizing about a state.
pub const STATE_RESIDUAL_TOL: f64 = 1e-6;

/// Default tolerance on `|min Re lambda|` below which a state counts as
/// marginally stable.
pub const DEFAULT_MARGINAL_TOL: f64 = 1e-9;

/// Drift matrix `A` and diffusion matrix `D = B B^T` of the linearized
/// fluctuation equations about a steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationMatrices {
    pub drift: Matrix8,
    pub diffusion: Matrix8,
}

/// Eigenvalue summary of a drift matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub eigenvalues: [Complex64; 8],
    pub min_real_part: f64,
    /// All eigenvalue real parts exceed the tolerance.
    pub stable: bool,
    /// The smallest real part sits within tolerance of zero.
    pub marginal: bool,
}

/// Build the drift and diffusion matrices about `state`.
///
/// Rejects a state whose mean-field residual exceeds
/// [`STATE_RESIDUAL_TOL`], since linearizing about a non-stationary point
/// produces meaningless spectra.
pub fn build_matrices(params: &SystemParams, state: &SteadyState) -> Result<FluctuationMatrices> {
    params.validate()?;
    let residual = crate::model::mean_field_residual(params, state);
    if !(residual <= STATE_RESIDUAL_TOL) {
        return Err(Error::InconsistentState { residual, tolerance: STATE_RESIDUAL_TOL });
    }

    let g0 = Complex64::new(params.gamma0, 0.0);
    let g1 = Complex64::new(params.gamma1, 0.0);
    let g2 = Complex64::new(params.gamma2, 0.0);
    let g3 = Complex64::new(params.gamma3, 0.0);
    let x1 = params.chi1;
    let x2 = params.chi2;
    let b = state.beta;
    let a1 = state.alpha1;
    let a2 = state.alpha2;
    let a3 = state.alpha3;

    let mut a = Matrix8::zeros();
    let z = Complex64::ZERO;
    let rows: [[Complex64; 8]; 8] = [
        [g1, z, z, z, z, -x1 * b, -x1 * a3.conj(), z],
        [z, g1, z, z, -x1 * b.conj(), z, z, -x1 * a3],
        [z, z, g2, z, -x2 * b, z, -x2 * a3, z],
        [z, z, z, g2, z, -x2 * b.conj(), z, -x2 * a3.conj()],
        [z, -x1 * b, x2 * b.conj(), z, g3, z, -x1 * a1.conj(), x2 * a2],
        [-x1 * b.conj(), z, z, x2 * b, z, g3, x2 * a2.conj(), -x1 * a1],
        [x1 * a3, z, x2 * a3.conj(), z, x1 * a1, x2 * a2, g0, z],
        [z, x1 * a3.conj(), z, x2 * a3, x2 * a2.conj(), x1 * a1.conj(), z, g0],
    ];
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }

    let mut d = Matrix8::zeros();
    d[(0, 4)] = x1 * b;
    d[(4, 0)] = x1 * b;
    d[(1, 5)] = x1 * b.conj();
    d[(5, 1)] = x1 * b.conj();
    d[(4, 6)] = -x2 * a2.conj();
    d[(6, 4)] = -x2 * a2.conj();
    d[(5, 7)] = -x2 * a2;
    d[(7, 5)] = -x2 * a2;

    Ok(FluctuationMatrices { drift: a, diffusion: d })
}

/// Eigenvalues of the drift matrix with stability flags.
pub fn eigen_analysis(mats: &FluctuationMatrices, tolerance: f64) -> Result<StabilityReport> {
    let eigenvalues = eigenvalues8(&mats.drift)?;
    let min_real_part = eigenvalues.iter().map(|l| l.re).fold(f64::INFINITY, f64::min);
    Ok(StabilityReport {
        eigenvalues,
        min_real_part,
        stable: min_real_part > tolerance,
        marginal: min_real_part.abs() <= tolerance,
    })
}

/// Eigenvalues of a complex 8x8 matrix via the Schur form.
pub fn eigenvalues8(m: &Matrix8) -> Result<[Complex64; 8]> {
    if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::InvalidParams("drift matrix contains non-finite entries".into()));
    }
    let schur = m.clone().try_schur(1e-14, 20_000).ok_or(Error::EigenConvergence)?;
    let vals = schur.eigenvalues().ok_or(Error::EigenConvergence)?;
    let mut out = [Complex64::ZERO; 8];
    for (o, v) in out.iter_mut().zip(vals.iter()) {
        *o = *v;
    }
    Ok(out)
}

/// Coefficients of the degree-8 characteristic polynomial of the
/// below-threshold drift matrix, lowest order first. The polynomial
/// factors as `(gamma0 - l)^2 q(l)^2` with `q` cubic.
fn below_threshold_char_poly(params: &SystemParams) -> [f64; 9] {
    let beta = params.epsilon / params.gamma0;
    let b2 = beta * beta;
    let (g0, g1, g2, g3) = (params.gamma0, params.gamma1, params.gamma2, params.gamma3);
    // q(l) = (g1-l)(g2-l)(g3-l) + l b2 (chi1^2 - chi2^2) + b2 (g1 chi2^2 - g2 chi1^2)
    let q = [
        g1 * g2 * g3 + b2 * (g1 * params.chi2 * params.chi2 - g2 * params.chi1 * params.chi1),
        -(g1 * g2 + g1 * g3 + g2 * g3) + b2 * (params.chi1 * params.chi1 - params.chi2 * params.chi2),
        g1 + g2 + g3,
        -1.0,
    ];
    // (g0 - l)^2 = g0^2 - 2 g0 l + l^2
    let lin2 = [g0 * g0, -2.0 * g0, 1.0];
    let mut q2 = [0.0; 7];
    for (i, qi) in q.iter().enumerate() {
        for (j, qj) in q.iter().enumerate() {
            q2[i + j] += qi * qj;
        }
    }
    let mut p = [0.0; 9];
    for (i, li) in lin2.iter().enumerate() {
        for (j, qj) in q2.iter().enumerate() {
            p[i + j] += li * qj;
        }
    }
    p
}

/// Roots of the below-threshold characteristic polynomial: `gamma0`
/// twice plus the cubic factor's roots, each with multiplicity two.
pub fn below_threshold_char_roots(params: &SystemParams) -> Result<[Complex64; 8]> {
    params.validate()?;
    ensure_trivial_state(params)?;
    let beta = params.epsilon / params.gamma0;
    let b2 = beta * beta;
    let (g1, g2, g3) = (params.gamma1, params.gamma2, params.gamma3);
    // monic form l^3 + c2 l^2 + c1 l + c0 of -q(l)
    let c2 = -(g1 + g2 + g3);
    let c1 = g1 * g2 + g1 * g3 + g2 * g3 - b2 * (params.chi1 * params.chi1 - params.chi2 * params.chi2);
    let c0 = -(g1 * g2 * g3 + b2 * (g1 * params.chi2 * params.chi2 - g2 * params.chi1 * params.chi1));
    let companion =
        SMatrix::<f64, 3, 3>::new(0.0, 0.0, -c0, 1.0, 0.0, -c1, 0.0, 1.0, -c2);
    let cubic = companion.complex_eigenvalues();
    let g0 = Complex64::new(params.gamma0, 0.0);
    Ok([g0, g0, cubic[0], cubic[0], cubic[1], cubic[1], cubic[2], cubic[2]])
}

/// Cross-check of the eigenvalue solver against the closed-form
/// characteristic polynomial, valid below threshold. Returns the largest
/// polynomial residual over the eight computed eigenvalues, normalized
/// by the polynomial's evaluation magnitude at each point.
pub fn characteristic_poly_check(params: &SystemParams, epsilon: f64) -> Result<f64> {
    let params = params.with_epsilon(epsilon);
    params.validate()?;
    ensure_trivial_state(&params)?;
    let state = steady_state(&params, Branch::Plus, 0.0)?;
    let mats = build_matrices(&params, &state)?;
    let eigenvalues = eigenvalues8(&mats.drift)?;
    let coeffs = below_threshold_char_poly(&params);
    let mut worst: f64 = 0.0;
    for lambda in eigenvalues {
        let mut value = Complex64::ZERO;
        let mut scale = 0.0;
        let mut power = Complex64::new(1.0, 0.0);
        for c in coeffs {
            value += c * power;
            scale += c.abs() * power.norm();
            power *= lambda;
        }
        worst = worst.max(value.norm() / scale.max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

fn ensure_trivial_state(params: &SystemParams) -> Result<()> {
    let report = classify_regime(params);
    if let Some(eps_c) = report.eps_c {
        if params.epsilon > eps_c {
            return Err(Error::AboveThreshold { epsilon: params.epsilon, threshold: eps_c });
        }
    }
    Ok(())
}

/// Stability classification of one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityClass {
    BelowThresholdStable,
    AboveThresholdUnstable,
    NoThresholdStable,
    Marginal,
}

impl StabilityClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            StabilityClass::BelowThresholdStable => "below-threshold-stable",
            StabilityClass::AboveThresholdUnstable => "above-threshold-unstable",
            StabilityClass::NoThresholdStable => "no-threshold-stable",
            StabilityClass::Marginal => "marginal",
        }
    }
}

impl std::str::FromStr for StabilityClass {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "below-threshold-stable" => Ok(StabilityClass::BelowThresholdStable),
            "above-threshold-unstable" => Ok(StabilityClass::AboveThresholdUnstable),
            "no-threshold-stable" => Ok(StabilityClass::NoThresholdStable),
            "marginal" => Ok(StabilityClass::Marginal),
            other => Err(format!("unknown stability class `{other}`")),
        }
    }
}

/// One grid cell of a stability map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityMapPoint {
    pub chi2: f64,
    pub epsilon: f64,
    pub class: StabilityClass,
    pub min_real_part: f64,
}

/// Classify every `(chi2, epsilon)` cell of a grid. Cells are independent
/// and evaluated in parallel when the `parallel` feature is enabled.
pub fn stability_map(
    base: &SystemParams,
    chi2_values: &[f64],
    eps_values: &[f64],
) -> Result<Vec<StabilityMapPoint>> {
    stability_map_impl(base, chi2_values, eps_values, false)
}

/// Sequential twin of [`stability_map`], bit-identical output.
pub fn stability_map_sequential(
    base: &SystemParams,
    chi2_values: &[f64],
    eps_values: &[f64],
) -> Result<Vec<StabilityMapPoint>> {
    stability_map_impl(base, chi2_values, eps_values, true)
}

fn stability_map_impl(
    base: &SystemParams,
    chi2_values: &[f64],
    eps_values: &[f64],
    sequential: bool,
) -> Result<Vec<StabilityMapPoint>> {
    base.validate()?;
    if chi2_values.iter().chain(eps_values).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("grid values must be finite".into()));
    }
    let n = chi2_values.len() * eps_values.len();
    let cells = exec::indexed_map(n, sequential, |idx| {
        let chi2 = chi2_values[idx / eps_values.len()];
        let epsilon = eps_values[idx % eps_values.len()];
        classify_cell(base, chi2, epsilon)
    });
    cells.into_iter().collect()
}

fn classify_cell(base: &SystemParams, chi2: f64, epsilon: f64) -> Result<StabilityMapPoint> {
    let params = base.with_chi2(chi2).with_epsilon(epsilon);
    params.validate()?;
    let report = classify_regime(&params);
    let state = steady_state(&params, Branch::Plus, 0.0)?;
    let mats = build_matrices(&params, &state)?;
    let eigen = eigen_analysis(&mats, DEFAULT_MARGINAL_TOL)?;
    let class = if state.above_threshold {
        StabilityClass::AboveThresholdUnstable
    } else if eigen.marginal {
        StabilityClass::Marginal
    } else if matches!(report.regime, Regime::WithThreshold) {
        StabilityClass::BelowThresholdStable
    } else {
        StabilityClass::NoThresholdStable
    };
    Ok(StabilityMapPoint { chi2, epsilon, class, min_real_part: eigen.min_real_part })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{steady_state, Branch};

    fn standard(epsilon: f64) -> SystemParams {
        SystemParams::new(1.0, 1.0, 3.0, 1.0, 0.01, 0.004, epsilon).unwrap()
    }

    const EPS_C: f64 = 102.778_306_474_129_747_868_540_5;

    #[test]
    fn empty_cavity_matrices_are_diagonal_decay() {
        let p = standard(0.0);
        let st = steady_state(&p, Branch::Plus, 0.0).unwrap();
        let mats = build_matrices(&p, &st).unwrap();
        let expected = [1.0, 1.0, 3.0, 3.0, 1.0, 1.0, 1.0, 1.0];
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == j { expected[i] } else { 0.0 };
                assert_eq!(mats.drift[(i, j)], Complex64::new(want, 0.0));
                assert_eq!(mats.diffusion[(i, j)], Complex64::ZERO);
            }
        }
    }

    #[test]
    fn below_threshold_has_no_alpha_entries() {
        let p = standard(0.5 * EPS_C);
        let st = steady_state(&p, Branch::Plus, 0.0).unwrap();
        let mats = build_matrices(&p, &st).unwrap();
        // columns 6,7 couple fluctuations to the pump only through the
        // alpha steady-state values, all zero here
        for i in 0..6 {
            assert_eq!(mats.drift[(i, 6)], Complex64::ZERO);
            assert_eq!(mats.drift[(i, 7)], Complex64::ZERO);
            assert_eq!(mats.drift[(6, i)], Complex64::ZERO);
            assert_eq!(mats.drift[(7, i)], Complex64::ZERO);
        }
        // diffusion has exactly the four downconversion entries
        let b = st.beta;
        assert_eq!(mats.diffusion[(0, 4)], 0.01 * b);
        assert_eq!(mats.diffusion[(4, 0)], 0.01 * b);
        assert_eq!(mats.diffusion[(1, 5)], 0.01 * b.conj());
        assert_eq!(mats.diffusion[(5, 1)], 0.01 * b.conj());
        let nonzero = mats.diffusion.iter().filter(|v| **v != Complex64::ZERO).count();
        assert_eq!(nonzero, 4);
    }

    #[test]
    fn above_threshold_diffusion_gains_cross_blocks() {
        let p = standard(1.5 * EPS_C);
        let st = steady_state(&p, Branch::Plus, 0.0).unwrap();
        let mats = build_matrices(&p, &st).unwrap();
        assert_eq!(mats.diffusion[(4, 6)], -p.chi2 * st.alpha2.conj());
        assert_eq!(mats.diffusion[(5, 7)], -p.chi2 * st.alpha2);
        assert!(mats.diffusion[(4, 6)].norm() > 0.0);
        // diffusion stays symmetric
        assert_eq!(mats.diffusion.transpose(), mats.diffusion);
    }

    #[test]
    fn rejects_inconsistent_state() {
        let p = standard(0.5 * EPS_C);
        let mut st = steady_state(&p, Branch::Plus, 0.0).unwrap();
        st.alpha1 += Complex64::new(0.1, 0.0);
        assert!(matches!(
            build_matrices(&p, &st),
            Err(Error::InconsistentState { .. })
        ));
    }

    #[test]
    fn equal_loss_eigenvalues_match_closed_form() {
        // gamma = gamma0 = 1, chi1 = 0.01, chi2 = 0.004, epsilon = 50:
        // eigenvalues {1 x4, 1 +- 0.458257569495584 (x2 each)}
        let p = SystemParams::new(1.0, 1.0, 1.0, 1.0, 0.01, 0.004, 50.0).unwrap();
        let st = steady_state(&p, Branch::Plus, 0.0).unwrap();
        let mats = build_matrices(&p, &st).unwrap();
        let rep = eigen_analysis(&mats, DEFAULT_MARGINAL_TOL).unwrap();
        let shift = 0.458_257_569_495_584_000_658_805;
        let mut expected = vec![
            1.0,
            1.0,
            1.0,
            1.0,
            1.0 + shift,
            1.0 + shift,
            1.0 - shift,
            1.0 - shift,
        ];
        let mut got: Vec<f64> = rep.eigenvalues.iter().map(|l| l.re).collect();
        assert!(rep.eigenvalues.iter().all(|l| l.im.abs() < 1e-10));
        got.sort_by(f64::total_cmp);
        expected.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-10, "{g} vs {e}");
        }
        assert!((rep.min_real_part - (1.0 - shift)).abs() < 1e-10);
        assert!(rep.stable && !rep.marginal);
    }

    #[test]
    fn marginal_exactly_at_threshold() {
        let p = standard(EPS_C);
        let st = steady_state(&p, Branch::Plus, 0.0).unwrap();
        let mats = build_matrices(&p, &st).unwrap();
        // use a tolerance large enough to absorb the f64 rounding of eps_c
        let rep = eigen_analysis(&mats, 1e-9).unwrap();
        assert!(rep.marginal);
        assert!(!rep.stable);
    }

    #[test]
    fn char_poly_residual_small_below_threshold() {
        let res = characteristic_poly_check(&standard(0.0), 0.9 * EPS_C).unwrap();
        assert!(res <= 1e-8, "residual {res}");
    }

    #[test]
    fn char_poly_rejects_above_threshold() {
        assert!(matches!(
            characteristic_poly_check(&standard(0.0), 1.2 * EPS_C),
            Err(Error::AboveThreshold { .. })
        ));
    }

    #[test]
    fn char_roots_at_zero_pump_are_the_losses() {
        let roots = below_threshold_char_roots(&standard(0.0)).unwrap();
        let mut re: Vec<f64> = roots.iter().map(|r| r.re).collect();
        re.sort_by(f64::total_cmp);
        let expected = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 3.0, 3.0];
        for (g, e) in re.iter().zip(expected) {
            assert!((g - e).abs() < 1e-9);
        }
        assert!(roots.iter().all(|r| r.im.abs() < 1e-9));
    }

    #[test]
    fn above_threshold_zero_mode() {
        let p = standard(1.5 * EPS_C);
        let st = steady_state(&p, Branch::Plus, 0.0).unwrap();
        let mats = build_matrices(&p, &st).unwrap();
        let rep = eigen_analysis(&mats, DEFAULT_MARGINAL_TOL).unwrap();
        let min_abs = rep.eigenvalues.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min);
        assert!(min_abs <= 1e-6, "smallest |eigenvalue| {min_abs}");
        assert!(!rep.stable);
    }

    #[test]
    fn stability_map_reference_cells() {
        let base = standard(0.0);
        let map = stability_map(&base, &[0.004, 0.025], &[50.0, 150.0]).unwrap();
        assert_eq!(map.len(), 4);
        let find = |chi2: f64, eps: f64| {
            map.iter().find(|c| c.chi2 == chi2 && c.epsilon == eps).unwrap().class
        };
        assert_eq!(find(0.004, 50.0), StabilityClass::BelowThresholdStable);
        assert_eq!(find(0.004, 150.0), StabilityClass::AboveThresholdUnstable);
        assert_eq!(find(0.025, 50.0), StabilityClass::NoThresholdStable);
        assert_eq!(find(0.025, 150.0), StabilityClass::NoThresholdStable);
    }

    #[test]
    fn stability_map_matches_sequential() {
        let base = standard(0.0);
        let chi2: Vec<f64> = (0..6).map(|i| 0.002 + 0.004 * i as f64).collect();
        let eps: Vec<f64> = (0..6).map(|i| 20.0 * (i + 1) as f64).collect();
        let par = stability_map(&base, &chi2, &eps).unwrap();
        let seq = stability_map_sequential(&base, &chi2, &eps).unwrap();
        assert_eq!(par, seq);
    }
}
