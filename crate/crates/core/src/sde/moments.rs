//! Ensemble moment accumulation and ordering corrections.
//!
//! Raw trajectory averages are representation dependent: doubled-variable
//! products estimate normally ordered operator moments directly, while
//! Wigner products estimate symmetrically ordered ones. The records
//! produced here store measurable quantities:
//!
//! * intensities are photon numbers `<a+ a>`, so Wigner averages of
//!   `|a|^2` are shifted by `-1/2`;
//! * quadrature (co)variances are operator (co)variances. Quadratures of
//!   distinct modes commute, and a single quadrature commutes with
//!   itself, so Wigner values carry no correction, while doubled-variable
//!   variances (normally ordered) gain the vacuum unit on the diagonal.
//!
//! The triple witnesses V123, V312, V231 combine only commuting
//! quadratures, which is why they are formed directly from these
//! (co)variances.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Representation, SdeConfig};

/// Column order of [`MomentRecord::quad_cov`].
pub const QUAD_COV_ORDER: [&str; 12] = [
    "V(X1)",
    "V(X2)",
    "V(X3)",
    "C(X1,X2)",
    "C(X1,X3)",
    "C(X2,X3)",
    "V(Y1)",
    "V(Y2)",
    "V(Y3)",
    "C(Y1,Y2)",
    "C(Y1,Y3)",
    "C(Y2,Y3)",
];

/// Moments of the ensemble at one recorded time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    /// Mean amplitudes of modes 1..3 and the pump.
    pub mean_amp: [Complex64; 4],
    pub mean_amp_se: [f64; 4],
    /// Photon numbers `<a+ a>` of modes 1..3 and the pump.
    pub intensity: [f64; 4],
    pub intensity_se: [f64; 4],
    /// Mean quadratures `X1, Y1, X2, Y2, X3, Y3`.
    pub quad_mean: [f64; 6],
    /// Operator quadrature (co)variances, ordered as [`QUAD_COV_ORDER`].
    pub quad_cov: [f64; 12],
    pub quad_cov_se: [f64; 12],
    /// Triple witnesses `(V123, V312, V231)` at this time.
    pub vijk: [f64; 3],
}

/// Time-resolved ensemble moments of one stochastic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMoments {
    pub representation: Representation,
    pub times: Vec<f64>,
    pub records: Vec<MomentRecord>,
    /// Requested trajectory count.
    pub n_traj: usize,
    /// Trajectories that entered the averages.
    pub n_used: usize,
    pub n_divergent: usize,
    /// More than 1% of trajectories diverged.
    pub unreliable: bool,
}

/// Triple witness time series from stored quadrature (co)variances.
pub fn vijk_timeseries(moments: &EnsembleMoments) -> Vec<[f64; 3]> {
    moments.records.iter().map(|r| vijk_from_cov(&r.quad_cov)).collect()
}

/// Column names of the moments CSV, in writing order.
pub fn moments_csv_order() -> Vec<String> {
    let mut cols = vec!["time".to_string()];
    for m in ["a1", "a2", "a3", "b"] {
        cols.push(format!("{m}_mean_re"));
        cols.push(format!("{m}_mean_im"));
    }
    for m in ["n1", "n2", "n3", "n_pump"] {
        cols.push(m.to_string());
    }
    for name in QUAD_COV_ORDER {
        cols.push(
            name.replace("V(", "V_").replace("C(", "C_").replace(',', "_").replace(')', ""),
        );
    }
    for v in ["v123", "v312", "v231"] {
        cols.push(v.to_string());
    }
    cols.push("n_divergent".to_string());
    cols
}

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Combination variances of the three symmetric triple witnesses from a
/// covariance record.
pub(crate) fn vijk_from_cov(cov: &[f64; 12]) -> [f64; 3] {
    let r = INV_SQRT2;
    let x = |c: [f64; 3]| quad_form(c, &cov[0..6]);
    let y = |c: [f64; 3]| quad_form(c, &cov[6..12]);
    [
        x([1.0, -r, -r]) + y([1.0, r, r]),
        x([-r, -r, 1.0]) + y([r, r, 1.0]),
        x([-r, 1.0, -r]) + y([r, 1.0, r]),
    ]
}

/// `c^T M c` for a 3x3 symmetric block stored as
/// `[V1, V2, V3, C12, C13, C23]`.
fn quad_form(c: [f64; 3], block: &[f64]) -> f64 {
    c[0] * c[0] * block[0]
        + c[1] * c[1] * block[1]
        + c[2] * c[2] * block[2]
        + 2.0 * (c[0] * c[1] * block[3] + c[0] * c[2] * block[4] + c[1] * c[2] * block[5])
}

/// Per-trajectory observables at one record time.
#[derive(Clone, Copy)]
pub(crate) struct Sample {
    /// Uncrossed amplitudes `a1, a2, a3, b`.
    amp: [Complex64; 4],
    /// `Re(a a+)` for doubled variables, `|a|^2` for Wigner.
    intensity: [f64; 4],
    /// Quadrature samples `X1, Y1, X2, Y2, X3, Y3`; complex because the
    /// doubled variables are conjugate only on average.
    quad: [Complex64; 6],
}

impl Sample {
    pub(crate) fn from_positive_p(s: &[Complex64; 8]) -> Self {
        let amp = [s[0], s[2], s[4], s[6]];
        let intensity = [
            (s[0] * s[1]).re,
            (s[2] * s[3]).re,
            (s[4] * s[5]).re,
            (s[6] * s[7]).re,
        ];
        let i = Complex64::I;
        let quad = [
            s[0] + s[1],
            -i * (s[0] - s[1]),
            s[2] + s[3],
            -i * (s[2] - s[3]),
            s[4] + s[5],
            -i * (s[4] - s[5]),
        ];
        Self { amp, intensity, quad }
    }

    pub(crate) fn from_wigner(s: &[Complex64; 4]) -> Self {
        let amp = [s[0], s[1], s[2], s[3]];
        let intensity = [s[0].norm_sqr(), s[1].norm_sqr(), s[2].norm_sqr(), s[3].norm_sqr()];
        let quad = [
            Complex64::new(2.0 * s[0].re, 0.0),
            Complex64::new(2.0 * s[0].im, 0.0),
            Complex64::new(2.0 * s[1].re, 0.0),
            Complex64::new(2.0 * s[1].im, 0.0),
            Complex64::new(2.0 * s[2].re, 0.0),
            Complex64::new(2.0 * s[2].im, 0.0),
        ];
        Self { amp, intensity, quad }
    }
}

/// Quadrature product pairs accumulated per time: the XX block then the
/// YY block, diagonals first.
const PROD_PAIRS: [(usize, usize); 12] = [
    (0, 0),
    (2, 2),
    (4, 4),
    (0, 2),
    (0, 4),
    (2, 4),
    (1, 1),
    (3, 3),
    (5, 5),
    (1, 3),
    (1, 5),
    (3, 5),
];

#[derive(Clone)]
struct TimeAccum {
    sum_amp: [Complex64; 4],
    sum_intensity: [f64; 4],
    sum_quad: [Complex64; 6],
    sum_prod: [Complex64; 12],
}

impl TimeAccum {
    fn zero() -> Self {
        Self {
            sum_amp: [Complex64::ZERO; 4],
            sum_intensity: [0.0; 4],
            sum_quad: [Complex64::ZERO; 6],
            sum_prod: [Complex64::ZERO; 12],
        }
    }

    fn add_sample(&mut self, s: &Sample) {
        for m in 0..4 {
            self.sum_amp[m] += s.amp[m];
            self.sum_intensity[m] += s.intensity[m];
        }
        for q in 0..6 {
            self.sum_quad[q] += s.quad[q];
        }
        for (k, (i, j)) in PROD_PAIRS.iter().enumerate() {
            self.sum_prod[k] += s.quad[*i] * s.quad[*j];
        }
    }

    fn merge(&mut self, other: &Self) {
        for m in 0..4 {
            self.sum_amp[m] += other.sum_amp[m];
            self.sum_intensity[m] += other.sum_intensity[m];
        }
        for q in 0..6 {
            self.sum_quad[q] += other.sum_quad[q];
        }
        for k in 0..12 {
            self.sum_prod[k] += other.sum_prod[k];
        }
    }

    /// Raw (uncorrected) statistics for `n` trajectories.
    fn stats(&self, n: usize) -> RawStats {
        let nf = n as f64;
        let mut mean_amp = [Complex64::ZERO; 4];
        let mut intensity = [0.0; 4];
        for m in 0..4 {
            mean_amp[m] = self.sum_amp[m] / nf;
            intensity[m] = self.sum_intensity[m] / nf;
        }
        let mut quad_mean = [Complex64::ZERO; 6];
        for q in 0..6 {
            quad_mean[q] = self.sum_quad[q] / nf;
        }
        let bessel = if n > 1 { nf / (nf - 1.0) } else { 0.0 };
        let mut cov = [0.0; 12];
        for (k, (i, j)) in PROD_PAIRS.iter().enumerate() {
            let m2 = self.sum_prod[k] / nf;
            cov[k] = bessel * (m2 - quad_mean[*i] * quad_mean[*j]).re;
        }
        RawStats { mean_amp, intensity, quad_mean, cov }
    }
}

struct RawStats {
    mean_amp: [Complex64; 4],
    intensity: [f64; 4],
    quad_mean: [Complex64; 6],
    cov: [f64; 12],
}

impl RawStats {
    /// Apply the representation's ordering corrections.
    fn corrected(mut self, representation: Representation) -> Self {
        match representation {
            Representation::PositiveP => {
                // normally ordered variances gain the vacuum unit
                for k in [0, 1, 2, 6, 7, 8] {
                    self.cov[k] += 1.0;
                }
            }
            Representation::TruncatedWigner => {
                for m in 0..4 {
                    self.intensity[m] -= 0.5;
                }
            }
        }
        self
    }
}

/// Sums over one batch of trajectories, kept per record time.
pub(crate) struct BatchAccum {
    pub(crate) n_ok: usize,
    pub(crate) n_divergent: usize,
    times: Vec<TimeAccum>,
}

impl BatchAccum {
    pub(crate) fn new(n_records: usize) -> Self {
        Self { n_ok: 0, n_divergent: 0, times: vec![TimeAccum::zero(); n_records] }
    }

    pub(crate) fn add_trajectory(&mut self, trace: &[Sample]) {
        debug_assert_eq!(trace.len(), self.times.len());
        self.n_ok += 1;
        for (acc, sample) in self.times.iter_mut().zip(trace) {
            acc.add_sample(sample);
        }
    }
}

/// Reduce batch sums (in batch order) into pooled records with batch-block
/// standard errors.
pub(crate) fn finalize(
    config: &SdeConfig,
    times: &[f64],
    batches: Vec<BatchAccum>,
) -> Result<EnsembleMoments> {
    let n_used: usize = batches.iter().map(|b| b.n_ok).sum();
    let n_divergent: usize = batches.iter().map(|b| b.n_divergent).sum();
    if n_used == 0 {
        return Err(Error::AllTrajectoriesDiverged(config.n_traj));
    }

    let n_records = times.len();
    let mut pooled = vec![TimeAccum::zero(); n_records];
    for batch in &batches {
        for (p, t) in pooled.iter_mut().zip(&batch.times) {
            p.merge(t);
        }
    }

    // standard errors from the scatter of per-batch statistics; batches
    // with fewer than two surviving trajectories carry no variance info
    let se_batches: Vec<&BatchAccum> = batches.iter().filter(|b| b.n_ok >= 2).collect();
    let k_se = se_batches.len();

    let mut records = Vec::with_capacity(n_records);
    for (t_idx, acc) in pooled.iter().enumerate() {
        let stats = acc.stats(n_used).corrected(config.representation);

        let mut mean_amp_se = [0.0; 4];
        let mut intensity_se = [0.0; 4];
        let mut quad_cov_se = [0.0; 12];
        if k_se >= 2 {
            let batch_stats: Vec<RawStats> = se_batches
                .iter()
                .map(|b| b.times[t_idx].stats(b.n_ok).corrected(config.representation))
                .collect();
            let kf = k_se as f64;
            let spread = |values: &mut dyn Iterator<Item = f64>| -> f64 {
                let vals: Vec<f64> = values.collect();
                let mean = vals.iter().sum::<f64>() / kf;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (kf - 1.0);
                (var / kf).sqrt()
            };
            for m in 0..4 {
                mean_amp_se[m] = spread(
                    &mut batch_stats.iter().map(|s| (s.mean_amp[m] - stats.mean_amp[m]).norm()),
                );
                intensity_se[m] = spread(&mut batch_stats.iter().map(|s| s.intensity[m]));
            }
            for k in 0..12 {
                quad_cov_se[k] = spread(&mut batch_stats.iter().map(|s| s.cov[k]));
            }
        }

        let mut quad_mean = [0.0; 6];
        for q in 0..6 {
            quad_mean[q] = stats.quad_mean[q].re;
        }
        records.push(MomentRecord {
            mean_amp: stats.mean_amp,
            mean_amp_se,
            intensity: stats.intensity,
            intensity_se,
            quad_mean,
            quad_cov: stats.cov,
            quad_cov_se,
            vijk: vijk_from_cov(&stats.cov),
        });
    }

    Ok(EnsembleMoments {
        representation: config.representation,
        times: times.to_vec(),
        records,
        n_traj: config.n_traj,
        n_used,
        n_divergent,
        unreliable: (n_divergent as f64) > 0.01 * (config.n_traj as f64),
    })
}
