//! Noise spectra of the linearized fluctuations and their input-output
//! transformation to measurable quantities.
//!
//! The stationary fluctuations form an Ornstein-Uhlenbeck process, whose
//! spectral matrix in the doubled phase-space basis is
//!
//! ```text
//! S(w) = (A + i w I)^-1 D (A^T - i w I)^-1 .
//! ```
//!
//! `S(w)` is transformed to the quadrature basis with the per-mode map
//! `X = a + a+`, `Y = -i (a - a+)` and pushed through the cavity mirror
//! with the input-output relations, which add one unit of vacuum noise to
//! each diagonal entry. The measurable (symmetrized) spectrum is the
//! Hermitian part of `S`, obtained by averaging over `+w` and `-w`; the
//! quadrature congruence of that average is real and symmetric.
//!
//! All output spectra are normalized so that vacuum inputs give exactly 1
//! per quadrature.

use nalgebra::SMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{SteadyState, SystemParams};
use crate::stability::{
    build_matrices, eigen_analysis, FluctuationMatrices, Matrix8, DEFAULT_MARGINAL_TOL,
};

pub type RealMatrix8 = SMatrix<f64, 8, 8>;

/// Quadrature variable ordering used by every matrix in this module:
/// `X1, Y1, X2, Y2, X3, Y3, X0, Y0` with `0` the pump mode.
pub const QUADRATURE_ORDER: [&str; 8] = ["X1", "Y1", "X2", "Y2", "X3", "Y3", "X0", "Y0"];

/// Tolerance on relative imaginary residue accepted by
/// [`quadrature_transform`].
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;

/// Intracavity spectral matrix `S(w)` in the `(a, a+)` basis.
pub fn intracavity_spectrum(mats: &FluctuationMatrices, omega: f64) -> Result<Matrix8> {
    if !omega.is_finite() {
        return Err(Error::InvalidParams("omega must be finite".into()));
    }
    let iw = Complex64::new(0.0, omega);
    let mut left = mats.drift;
    let mut right = mats.drift.transpose();
    for k in 0..8 {
        left[(k, k)] += iw;
        right[(k, k)] -= iw;
    }
    let left_inv = left.try_inverse().ok_or(Error::SingularSpectrum { omega })?;
    let right_inv = right.try_inverse().ok_or(Error::SingularSpectrum { omega })?;
    Ok(left_inv * mats.diffusion * right_inv)
}

/// Measurable (Hermitian-part) spectral matrix, `(S(w) + S(-w)) / 2`.
///
/// The raw `S(w)` carries an antisymmetric imaginary part at `w != 0`
/// which cancels in every variance of a Hermitian quadrature combination;
/// averaging the two frequency signs removes it explicitly so that the
/// quadrature transform yields a real symmetric matrix.
pub fn symmetrized_spectrum(mats: &FluctuationMatrices, omega: f64) -> Result<Matrix8> {
    let plus = intracavity_spectrum(mats, omega)?;
    let minus = intracavity_spectrum(mats, -omega)?;
    Ok((plus + minus) * Complex64::new(0.5, 0.0))
}

/// Congruence of an intracavity spectral matrix into the quadrature basis.
///
/// Expects a symmetrized spectrum; residual imaginary parts above
/// [`IMAG_RESIDUE_TOL`] (relative to the largest entry) indicate an
/// inconsistent upstream matrix and are rejected rather than discarded.
pub fn quadrature_transform(spectrum: &Matrix8) -> Result<RealMatrix8> {
    let mut t = Matrix8::zeros();
    for mode in 0..4 {
        t[(2 * mode, 2 * mode)] = Complex64::new(1.0, 0.0);
        t[(2 * mode, 2 * mode + 1)] = Complex64::new(1.0, 0.0);
        t[(2 * mode + 1, 2 * mode)] = Complex64::new(0.0, -1.0);
        t[(2 * mode + 1, 2 * mode + 1)] = Complex64::new(0.0, 1.0);
    }
    let quad = t * spectrum * t.transpose();
    let scale = quad.iter().map(|v| v.norm()).fold(1.0f64, f64::max);
    let residue = quad.iter().map(|v| v.im.abs()).fold(0.0f64, f64::max);
    if residue > IMAG_RESIDUE_TOL * scale {
        return Err(Error::ImaginaryResidue { residue, tolerance: IMAG_RESIDUE_TOL * scale });
    }
    Ok(quad.map(|v| v.re))
}

/// Apply the input-output relations to an intracavity quadrature matrix.
///
/// Diagonal entries become `1 + 2 gamma_j S_jj` (the 1 is the vacuum shot
/// noise of the reflected input), off-diagonal entries
/// `2 sqrt(gamma_j gamma_k) S_jk`.
pub fn output_spectrum(quad_intra: &RealMatrix8, params: &SystemParams) -> RealMatrix8 {
    let rates = [
        params.gamma1,
        params.gamma1,
        params.gamma2,
        params.gamma2,
        params.gamma3,
        params.gamma3,
        params.gamma0,
        params.gamma0,
    ];
    let mut out = RealMatrix8::zeros();
    for i in 0..8 {
        for j in 0..8 {
            let shot = if i == j { 1.0 } else { 0.0 };
            out[(i, j)] = shot + 2.0 * (rates[i] * rates[j]).sqrt() * quad_intra[(i, j)];
        }
    }
    out
}

/// Variance of the signal-quadrature combination `sum_q c_q Q_q` in an
/// output spectrum. Coefficients follow the first six entries of
/// [`QUADRATURE_ORDER`], i.e. `(X1, Y1, X2, Y2, X3, Y3)`; the pump
/// quadratures do not enter the witnesses.
pub fn combination_variance(spec_out: &RealMatrix8, coeffs: &[f64; 6]) -> f64 {
    let mut acc = 0.0;
    for i in 0..6 {
        for j in 0..6 {
            acc += coeffs[i] * coeffs[j] * spec_out[(i, j)];
        }
    }
    acc
}

/// Output spectra over a frequency grid.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    /// Analysis frequencies in units of the mode-1 loss rate.
    pub omega: Vec<f64>,
    /// Symmetrized intracavity spectral matrix per frequency.
    pub intracavity: Vec<Matrix8>,
    /// Output quadrature spectral matrix per frequency.
    pub quad_out: Vec<RealMatrix8>,
}

/// Evenly spaced frequency grid from 0 to `max` inclusive.
pub fn omega_grid(max: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![0.0];
    }
    (0..count).map(|i| max * i as f64 / (count - 1) as f64).collect()
}

/// Full linearized pipeline over a frequency grid.
///
/// Refuses operating points at or above threshold: the linearization
/// carries a zero eigenvalue there and the spectra are meaningless.
pub fn output_spectra(
    params: &SystemParams,
    state: &SteadyState,
    omega: &[f64],
) -> Result<SpectralResult> {
    output_spectra_impl(params, state, omega, false)
}

/// Sequential twin of [`output_spectra`], bit-identical output.
pub fn output_spectra_sequential(
    params: &SystemParams,
    state: &SteadyState,
    omega: &[f64],
) -> Result<SpectralResult> {
    output_spectra_impl(params, state, omega, true)
}

fn output_spectra_impl(
    params: &SystemParams,
    state: &SteadyState,
    omega: &[f64],
    sequential: bool,
) -> Result<SpectralResult> {
    let mats = linearization_for_spectra(params, state)?;
    let per_omega = exec::indexed_map(omega.len(), sequential, |i| -> Result<_> {
        let sym = symmetrized_spectrum(&mats, omega[i])?;
        let quad = quadrature_transform(&sym)?;
        Ok((sym, output_spectrum(&quad, params)))
    });
    let mut intracavity = Vec::with_capacity(omega.len());
    let mut quad_out = Vec::with_capacity(omega.len());
    for item in per_omega {
        let (s, q) = item?;
        intracavity.push(s);
        quad_out.push(q);
    }
    Ok(SpectralResult { omega: omega.to_vec(), intracavity, quad_out })
}

/// Build and vet the linearization used for spectra. Shared with the
/// entanglement criteria pipeline.
pub(crate) fn linearization_for_spectra(
    params: &SystemParams,
    state: &SteadyState,
) -> Result<FluctuationMatrices> {
    if state.above_threshold {
        let report = crate::model::classify_regime(params);
        return Err(Error::AboveThreshold {
            epsilon: params.epsilon,
            threshold: report.eps_c.unwrap_or(f64::INFINITY),
        });
    }
    let mats = build_matrices(params, state)?;
    let eigen = eigen_analysis(&mats, DEFAULT_MARGINAL_TOL)?;
    if eigen.marginal {
        return Err(Error::SingularSpectrum { omega: 0.0 });
    }
    if !eigen.stable {
        let report = crate::model::classify_regime(params);
        return Err(Error::AboveThreshold {
            epsilon: params.epsilon,
            threshold: report.eps_c.unwrap_or(f64::INFINITY),
        });
    }
    Ok(mats)
}
