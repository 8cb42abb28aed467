//! Tripartite entanglement witnesses built from output spectra.
//!
//! Two families of combination-variance inequalities are evaluated over
//! the three signal modes. The pairwise set
//!
//! ```text
//! S12 = V(X1 - X2) + V(Y1 + Y2 + g3 Y3)
//! S13 = V(X1 - X3) + V(Y1 + g2 Y2 + Y3)
//! S23 = V(X2 - X3) + V(g1 Y1 + Y2 + Y3)
//! ```
//!
//! demonstrates full inseparability when any two fall below the bound,
//! while the symmetric set
//!
//! ```text
//! S123 = V(X1 - (X2 + X3)/sqrt2) + V(Y1 + (Y2 + Y3)/sqrt2)
//! S312 = V(X3 - (X1 + X2)/sqrt2) + V(Y3 + (Y1 + Y2)/sqrt2)
//! S231 = V(X2 - (X3 + X1)/sqrt2) + V(Y2 + (Y3 + Y1)/sqrt2)
//! ```
//!
//! requires only one violation. The mode indices are not interchangeable:
//! the cavity interactions single out each mode differently, so all six
//! orderings above are fixed and meaningful.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{classify_regime, steady_state, Branch, SystemParams};
use crate::spectra::{
    combination_variance, linearization_for_spectra, output_spectrum, quadrature_transform,
    symmetrized_spectrum, RealMatrix8,
};

/// Inequality bound for every witness.
///
/// This value is tied to the quadrature normalization `X = a + a+`,
/// `Y = -i(a - a+)` with vacuum variance 1 per quadrature, under which
/// each two-mode combination variance of a separable state is at least 4.
/// Other quadrature normalizations in use elsewhere rescale this bound;
/// all spectra in this crate use the normalization above.
pub const CRITERION_BOUND: f64 = 4.0;

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Gains multiplying the third mode's Y quadrature in each pairwise
/// witness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
}

/// Variance-minimizing gains for the pairwise witnesses at one frequency.
///
/// Setting the derivative of each Y-combination variance to zero gives
///
/// ```text
/// g1 = -(V(Y1,Y2) + V(Y1,Y3)) / V(Y1)
/// g2 = -(V(Y1,Y2) + V(Y2,Y3)) / V(Y2)
/// g3 = -(V(Y1,Y3) + V(Y2,Y3)) / V(Y3)
/// ```
///
/// evaluated on output spectral (co)variances.
pub fn optimal_gains(spec_out: &RealMatrix8) -> Result<GainSet> {
    let vy = [spec_out[(1, 1)], spec_out[(3, 3)], spec_out[(5, 5)]];
    for (k, v) in vy.iter().enumerate() {
        if *v <= f64::EPSILON {
            return Err(Error::ZeroVariance { mode: k + 1 });
        }
    }
    let vy12 = spec_out[(1, 3)];
    let vy13 = spec_out[(1, 5)];
    let vy23 = spec_out[(3, 5)];
    Ok(GainSet {
        g1: -(vy12 + vy13) / vy[0],
        g2: -(vy12 + vy23) / vy[1],
        g3: -(vy13 + vy23) / vy[2],
    })
}

/// The pairwise witnesses `(S12, S13, S23)` with the supplied gains.
pub fn pairwise_criteria(spec_out: &RealMatrix8, gains: &GainSet) -> [f64; 3] {
    let s12 = combination_variance(spec_out, &[1.0, 0.0, -1.0, 0.0, 0.0, 0.0])
        + combination_variance(spec_out, &[0.0, 1.0, 0.0, 1.0, 0.0, gains.g3]);
    let s13 = combination_variance(spec_out, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0])
        + combination_variance(spec_out, &[0.0, 1.0, 0.0, gains.g2, 0.0, 1.0]);
    let s23 = combination_variance(spec_out, &[0.0, 0.0, 1.0, 0.0, -1.0, 0.0])
        + combination_variance(spec_out, &[0.0, gains.g1, 0.0, 1.0, 0.0, 1.0]);
    [s12, s13, s23]
}

/// The symmetric witnesses `(S123, S312, S231)`.
pub fn symmetric_criteria(spec_out: &RealMatrix8) -> [f64; 3] {
    let r = INV_SQRT2;
    let s123 = combination_variance(spec_out, &[1.0, 0.0, -r, 0.0, -r, 0.0])
        + combination_variance(spec_out, &[0.0, 1.0, 0.0, r, 0.0, r]);
    let s312 = combination_variance(spec_out, &[-r, 0.0, -r, 0.0, 1.0, 0.0])
        + combination_variance(spec_out, &[0.0, r, 0.0, r, 0.0, 1.0]);
    let s231 = combination_variance(spec_out, &[-r, 0.0, 1.0, 0.0, -r, 0.0])
        + combination_variance(spec_out, &[0.0, r, 0.0, 1.0, 0.0, r]);
    [s123, s312, s231]
}

/// Full-inseparability verdict: at least two pairwise violations or at
/// least one symmetric violation.
pub fn fully_inseparable(pairwise: &[f64; 3], symmetric: &[f64; 3]) -> bool {
    let pairwise_hits = pairwise.iter().filter(|s| **s < CRITERION_BOUND).count();
    pairwise_hits >= 2 || symmetric.iter().any(|s| *s < CRITERION_BOUND)
}

/// The six witnesses and per-frequency gains over a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CriteriaSpectrum {
    pub omega: Vec<f64>,
    pub s12: Vec<f64>,
    pub s13: Vec<f64>,
    pub s23: Vec<f64>,
    pub s123: Vec<f64>,
    pub s312: Vec<f64>,
    pub s231: Vec<f64>,
    pub gains: Vec<GainSet>,
}

impl CriteriaSpectrum {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    fn series(&self, which: usize) -> &[f64] {
        match which {
            0 => &self.s12,
            1 => &self.s13,
            2 => &self.s23,
            3 => &self.s123,
            4 => &self.s312,
            _ => &self.s231,
        }
    }

    /// Minimum of one witness over the grid with its frequency,
    /// in the series order `s12, s13, s23, s123, s312, s231`.
    pub fn minimum(&self, which: usize) -> (f64, f64) {
        let series = self.series(which);
        let mut best = (f64::INFINITY, 0.0);
        for (w, s) in self.omega.iter().zip(series) {
            if *s < best.0 {
                best = (*s, *w);
            }
        }
        best
    }
}

/// Evaluate all six witnesses over a frequency grid for one operating
/// point. Refuses states at or above threshold like the spectra pipeline.
pub fn criteria_spectrum(params: &SystemParams, omega: &[f64]) -> Result<CriteriaSpectrum> {
    criteria_spectrum_impl(params, omega, false)
}

/// Sequential twin of [`criteria_spectrum`], bit-identical output.
pub fn criteria_spectrum_sequential(
    params: &SystemParams,
    omega: &[f64],
) -> Result<CriteriaSpectrum> {
    criteria_spectrum_impl(params, omega, true)
}

fn criteria_spectrum_impl(
    params: &SystemParams,
    omega: &[f64],
    sequential: bool,
) -> Result<CriteriaSpectrum> {
    let state = steady_state(params, Branch::Plus, 0.0)?;
    let mats = linearization_for_spectra(params, &state)?;
    let rows = exec::indexed_map(omega.len(), sequential, |i| -> Result<_> {
        let sym = symmetrized_spectrum(&mats, omega[i])?;
        let quad = quadrature_transform(&sym)?;
        let out = output_spectrum(&quad, params);
        let gains = optimal_gains(&out)?;
        Ok((pairwise_criteria(&out, &gains), symmetric_criteria(&out), gains))
    });
    let n = omega.len();
    let mut spec = CriteriaSpectrum {
        omega: omega.to_vec(),
        s12: Vec::with_capacity(n),
        s13: Vec::with_capacity(n),
        s23: Vec::with_capacity(n),
        s123: Vec::with_capacity(n),
        s312: Vec::with_capacity(n),
        s231: Vec::with_capacity(n),
        gains: Vec::with_capacity(n),
    };
    for row in rows {
        let (pair, symm, gains) = row?;
        spec.s12.push(pair[0]);
        spec.s13.push(pair[1]);
        spec.s23.push(pair[2]);
        spec.s123.push(symm[0]);
        spec.s312.push(symm[1]);
        spec.s231.push(symm[2]);
        spec.gains.push(gains);
    }
    Ok(spec)
}

/// Quantity varied along a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    /// Pump amplitude `epsilon`.
    Pump,
    /// Sum-frequency coupling `chi2`.
    Chi2,
}

/// Witness minima over the frequency window at one sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanMinima {
    /// Minima in the order `s12, s13, s23, s123, s312, s231`.
    pub min: [f64; 6],
    /// Frequency of each minimum.
    pub argmin_omega: [f64; 6],
    /// Optimized gains at the frequency of each pairwise minimum:
    /// `g3` at the `s12` minimum, `g2` at `s13`, `g1` at `s23`.
    pub gains_at_min: [f64; 3],
}

/// One point of a scan. `minima` is `None` for sweep points at or above
/// threshold, where the linearized witnesses are undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub value: f64,
    pub minima: Option<ScanMinima>,
}

/// Scan the witness minima across a parameter sweep.
///
/// For each sweep value the six witnesses are minimized over the supplied
/// frequency window. Sweep points whose operating point is at or above
/// threshold are skipped with an empty marker instead of failing the
/// whole scan.
pub fn scan_minimum(
    base: &SystemParams,
    sweep: SweepVariable,
    values: &[f64],
    omega: &[f64],
) -> Result<Vec<ScanPoint>> {
    scan_minimum_impl(base, sweep, values, omega, false)
}

/// Sequential twin of [`scan_minimum`], bit-identical output.
pub fn scan_minimum_sequential(
    base: &SystemParams,
    sweep: SweepVariable,
    values: &[f64],
    omega: &[f64],
) -> Result<Vec<ScanPoint>> {
    scan_minimum_impl(base, sweep, values, omega, true)
}

fn scan_minimum_impl(
    base: &SystemParams,
    sweep: SweepVariable,
    values: &[f64],
    omega: &[f64],
    sequential: bool,
) -> Result<Vec<ScanPoint>> {
    base.validate()?;
    if omega.is_empty() {
        return Err(Error::InvalidParams("empty frequency window".into()));
    }
    let points = exec::indexed_map(values.len(), sequential, |i| -> Result<ScanPoint> {
        let value = values[i];
        let params = match sweep {
            SweepVariable::Pump => base.with_epsilon(value),
            SweepVariable::Chi2 => base.with_chi2(value),
        };
        params.validate()?;
        let report = classify_regime(&params);
        if matches!(report.eps_c, Some(eps_c) if params.epsilon >= eps_c) {
            return Ok(ScanPoint { value, minima: None });
        }
        let spec = criteria_spectrum_sequential(&params, omega)?;
        let mut min = [0.0; 6];
        let mut argmin = [0.0; 6];
        for k in 0..6 {
            let (m, w) = spec.minimum(k);
            min[k] = m;
            argmin[k] = w;
        }
        let gain_at = |which: usize, pick: fn(&GainSet) -> f64| {
            let idx = spec
                .omega
                .iter()
                .position(|w| *w == argmin[which])
                .unwrap_or(0);
            pick(&spec.gains[idx])
        };
        Ok(ScanPoint {
            value,
            minima: Some(ScanMinima {
                min,
                argmin_omega: argmin,
                gains_at_min: [
                    gain_at(0, |g| g.g3),
                    gain_at(1, |g| g.g2),
                    gain_at(2, |g| g.g1),
                ],
            }),
        })
    });
    points.into_iter().collect()
}
