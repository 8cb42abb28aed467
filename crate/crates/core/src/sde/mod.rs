//! Stochastic integration of the full nonlinear equations.
//!
//! Two phase-space representations are integrated with the stochastic
//! Euler scheme:
//!
//! * the exact doubled-variable equations, whose trajectory averages give
//!   normally ordered operator moments but whose multiplicative noise can
//!   destabilize trajectories when the cavity oscillates, and
//! * the truncated Wigner equations with additive vacuum noise, whose
//!   averages give symmetrically ordered moments and which remain stable
//!   with macroscopically occupied modes.
//!
//! Trajectories are statistically independent, so ensembles run in
//! parallel over fixed-size batches. Every trajectory draws from its own
//! counter-derived RNG stream keyed by the master seed, and batch results
//! are reduced in index order, which makes ensemble moments bit-identical
//! for a given seed regardless of thread count.

mod moments;

pub use moments::{
    moments_csv_order, vijk_timeseries, EnsembleMoments, MomentRecord, QUAD_COV_ORDER,
};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{steady_state, Branch, SystemParams};

use moments::{BatchAccum, Sample};

/// Phase-space representation to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    /// Exact doubled phase space, normally ordered averages.
    PositiveP,
    /// Truncated Wigner, symmetrically ordered averages.
    #[serde(alias = "wigner")]
    TruncatedWigner,
}

/// Doubled-variable trajectory state
/// `(a1, a1+, a2, a2+, a3, a3+, b, b+)`. The crossed variables equal the
/// conjugates of the uncrossed ones only on ensemble average.
pub type PositivePState = [Complex64; 8];

/// Truncated Wigner trajectory state `(a1, a2, a3, b)`.
pub type WignerState = [Complex64; 4];

/// State of one stochastic trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryState {
    PositiveP(PositivePState),
    TruncatedWigner(WignerState),
}

/// Configuration of one ensemble run. Times are in units of the inverse
/// mode-1 loss rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub representation: Representation,
    /// Integration step.
    pub dt: f64,
    /// Final time; the run covers `round(t_final / dt)` steps.
    pub t_final: f64,
    /// Number of trajectories.
    pub n_traj: usize,
    /// Master seed. Trajectory `k` uses stream `k` of a ChaCha generator
    /// keyed by this value.
    pub seed: u64,
    /// Amplitude magnitude beyond which a trajectory counts as divergent.
    /// `None` resolves to 1000x the largest steady-state amplitude.
    pub divergence_bound: Option<f64>,
    /// Steps between recorded moment samples.
    pub record_every: usize,
    /// Trajectories per reduction batch. Batches are also the blocks used
    /// for standard-error estimation, so at least two full batches are
    /// needed for nonzero standard errors.
    pub batch_size: usize,
}

impl SdeConfig {
    pub fn new(representation: Representation, t_final: f64, n_traj: usize, seed: u64) -> Self {
        Self {
            representation,
            dt: 1e-3,
            t_final,
            n_traj,
            seed,
            divergence_bound: None,
            record_every: 100,
            batch_size: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParams("dt must be positive and finite".into()));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParams("t_final must be non-negative".into()));
        }
        if self.n_traj == 0 {
            return Err(Error::InvalidParams("n_traj must be at least 1".into()));
        }
        if self.record_every == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParams(
                "record_every and batch_size must be at least 1".into(),
            ));
        }
        if let Some(b) = self.divergence_bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidParams("divergence_bound must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Draw the vacuum initial state of one trajectory.
///
/// Vacuum is a delta function in the doubled representation, so those
/// trajectories start at the origin. In the Wigner representation vacuum
/// has half a photon of symmetric noise per mode: each variable starts at
/// `(xi1 + i xi2) / 2` with standard normal `xi`.
pub fn sample_initial<R: Rng + ?Sized>(
    representation: Representation,
    rng: &mut R,
) -> TrajectoryState {
    match representation {
        Representation::PositiveP => TrajectoryState::PositiveP([Complex64::ZERO; 8]),
        Representation::TruncatedWigner => {
            let mut state = [Complex64::ZERO; 4];
            for slot in &mut state {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *slot = Complex64::new(0.5 * re, 0.5 * im);
            }
            TrajectoryState::TruncatedWigner(state)
        }
    }
}

/// One Euler step of the doubled-variable equations.
///
/// `noise` holds eight standard normal draws; the step scales them by
/// `sqrt(dt)`. The first four drive the downconversion pair (shared
/// between modes 1 and 3 in conjugate combinations) and the last four the
/// sum-frequency pair (shared between mode 3 and the pump). Noise
/// amplitudes are complex square roots on the principal branch, evaluated
/// fresh at every step.
pub fn step_positive_p(
    state: &mut PositivePState,
    params: &SystemParams,
    dt: f64,
    noise: &[f64; 8],
) {
    let [a1, a1p, a2, a2p, a3, a3p, b, bp] = *state;
    let (x1, x2) = (params.chi1, params.chi2);
    let sq = dt.sqrt();
    let eps = Complex64::new(params.epsilon, 0.0);

    let r1 = (0.5 * x1 * b).sqrt();
    let r1p = (0.5 * x1 * bp).sqrt();
    let r2 = (-0.5 * x2 * a2p).sqrt();
    let r2p = (-0.5 * x2 * a2).sqrt();

    let e01 = Complex64::new(noise[0], noise[1]);
    let e23 = Complex64::new(noise[2], noise[3]);
    let e45 = Complex64::new(noise[4], noise[5]);
    let e67 = Complex64::new(noise[6], noise[7]);

    state[0] = a1 + (-params.gamma1 * a1 + x1 * a3p * b) * dt + r1 * e01 * sq;
    state[1] = a1p + (-params.gamma1 * a1p + x1 * a3 * bp) * dt + r1p * e23 * sq;
    state[2] = a2 + (-params.gamma2 * a2 + x2 * a3 * b) * dt;
    state[3] = a2p + (-params.gamma2 * a2p + x2 * a3p * bp) * dt;
    state[4] = a3
        + (-params.gamma3 * a3 + x1 * a1p * b - x2 * a2 * bp) * dt
        + (r1 * e01.conj() + r2 * e45) * sq;
    state[5] = a3p
        + (-params.gamma3 * a3p + x1 * a1 * bp - x2 * a2p * b) * dt
        + (r1p * e23.conj() + r2p * e67) * sq;
    state[6] = b
        + (eps - params.gamma0 * b - x1 * a1 * a3 - x2 * a2 * a3p) * dt
        + r2 * e45.conj() * sq;
    state[7] = bp
        + (eps - params.gamma0 * bp - x1 * a1p * a3p - x2 * a2p * a3) * dt
        + r2p * e67.conj() * sq;
}

/// One Euler step of the truncated Wigner equations. The noise here is
/// additive with amplitude `sqrt(gamma_j / 2)` per mode.
pub fn step_wigner(state: &mut WignerState, params: &SystemParams, dt: f64, noise: &[f64; 8]) {
    let [a1, a2, a3, b] = *state;
    let (x1, x2) = (params.chi1, params.chi2);
    let sq = dt.sqrt();
    let eps = Complex64::new(params.epsilon, 0.0);

    state[0] = a1
        + (-params.gamma1 * a1 + x1 * a3.conj() * b) * dt
        + (0.5 * params.gamma1).sqrt() * Complex64::new(noise[0], noise[1]) * sq;
    state[1] = a2
        + (-params.gamma2 * a2 + x2 * a3 * b) * dt
        + (0.5 * params.gamma2).sqrt() * Complex64::new(noise[2], noise[3]) * sq;
    state[2] = a3
        + (-params.gamma3 * a3 + x1 * a1.conj() * b - x2 * a2 * b.conj()) * dt
        + (0.5 * params.gamma3).sqrt() * Complex64::new(noise[4], noise[5]) * sq;
    state[3] = b
        + (eps - params.gamma0 * b - x1 * a1 * a3 - x2 * a2 * a3.conj()) * dt
        + (0.5 * params.gamma0).sqrt() * Complex64::new(noise[6], noise[7]) * sq;
}

/// Integrate an ensemble and accumulate its moments.
///
/// Divergent trajectories (any amplitude beyond the divergence bound, or
/// a non-finite value) are excluded from the moments and counted; a run
/// with more than 1% divergent trajectories is marked unreliable. The
/// result is deterministic for a fixed seed and configuration.
pub fn run_ensemble(params: &SystemParams, config: &SdeConfig) -> Result<EnsembleMoments> {
    run_impl(params, config, false)
}

/// Sequential twin of [`run_ensemble`], bit-identical output.
pub fn run_ensemble_sequential(
    params: &SystemParams,
    config: &SdeConfig,
) -> Result<EnsembleMoments> {
    run_impl(params, config, true)
}

fn run_impl(params: &SystemParams, config: &SdeConfig, sequential: bool) -> Result<EnsembleMoments> {
    params.validate()?;
    config.validate()?;
    let bound = resolve_divergence_bound(params, config)?;
    let n_steps = (config.t_final / config.dt).round() as usize;
    let n_records = n_steps / config.record_every + 1;
    let times: Vec<f64> = (0..n_records)
        .map(|k| (k * config.record_every) as f64 * config.dt)
        .collect();

    let n_batches = config.n_traj.div_ceil(config.batch_size);
    let batches: Vec<BatchAccum> = exec::indexed_map(n_batches, sequential, |batch_idx| {
        let start = batch_idx * config.batch_size;
        let end = (start + config.batch_size).min(config.n_traj);
        run_batch(params, config, bound, n_steps, n_records, start, end)
    });

    moments::finalize(config, &times, batches)
}

fn resolve_divergence_bound(params: &SystemParams, config: &SdeConfig) -> Result<f64> {
    if let Some(b) = config.divergence_bound {
        return Ok(b);
    }
    let state = steady_state(params, Branch::Plus, 0.0)?;
    Ok(1e3 * state.max_amplitude().max(1.0))
}

fn run_batch(
    params: &SystemParams,
    config: &SdeConfig,
    bound: f64,
    n_steps: usize,
    n_records: usize,
    start: usize,
    end: usize,
) -> BatchAccum {
    let mut accum = BatchAccum::new(n_records);
    let mut trace: Vec<Sample> = Vec::with_capacity(n_records);
    for traj in start..end {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(traj as u64);
        trace.clear();
        let ok = match config.representation {
            Representation::PositiveP => {
                run_trajectory_pp(params, config, bound, n_steps, &mut rng, &mut trace)
            }
            Representation::TruncatedWigner => {
                run_trajectory_wigner(params, config, bound, n_steps, &mut rng, &mut trace)
            }
        };
        if ok {
            accum.add_trajectory(&trace);
        } else {
            accum.n_divergent += 1;
        }
    }
    accum
}

fn draw_noise<R: Rng + ?Sized>(rng: &mut R) -> [f64; 8] {
    let mut n = [0.0; 8];
    for v in &mut n {
        *v = rng.sample(StandardNormal);
    }
    n
}

fn run_trajectory_pp<R: Rng + ?Sized>(
    params: &SystemParams,
    config: &SdeConfig,
    bound: f64,
    n_steps: usize,
    rng: &mut R,
    trace: &mut Vec<Sample>,
) -> bool {
    let mut state = [Complex64::ZERO; 8];
    trace.push(Sample::from_positive_p(&state));
    let bound_sqr = bound * bound;
    for step in 1..=n_steps {
        let noise = draw_noise(rng);
        step_positive_p(&mut state, params, config.dt, &noise);
        if state.iter().any(|v| !v.re.is_finite() || !v.im.is_finite() || v.norm_sqr() > bound_sqr)
        {
            return false;
        }
        if step % config.record_every == 0 {
            trace.push(Sample::from_positive_p(&state));
        }
    }
    true
}

fn run_trajectory_wigner<R: Rng + ?Sized>(
    params: &SystemParams,
    config: &SdeConfig,
    bound: f64,
    n_steps: usize,
    rng: &mut R,
    trace: &mut Vec<Sample>,
) -> bool {
    let mut state = match sample_initial(Representation::TruncatedWigner, rng) {
        TrajectoryState::TruncatedWigner(s) => s,
        TrajectoryState::PositiveP(_) => unreachable!(),
    };
    trace.push(Sample::from_wigner(&state));
    let bound_sqr = bound * bound;
    for step in 1..=n_steps {
        let noise = draw_noise(rng);
        step_wigner(&mut state, params, config.dt, &noise);
        if state.iter().any(|v| !v.re.is_finite() || !v.im.is_finite() || v.norm_sqr() > bound_sqr)
        {
            return false;
        }
        if step % config.record_every == 0 {
            trace.push(Sample::from_wigner(&state));
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard(epsilon: f64) -> SystemParams {
        SystemParams::new(1.0, 1.0, 3.0, 1.0, 0.01, 0.004, epsilon).unwrap()
    }

    const EPS_C: f64 = 102.778_306_474_129_747_868_540_5;

    #[test]
    fn zero_state_is_fixed_point_without_pump_and_noise() {
        let p = standard(0.0);
        let mut pp = [Complex64::ZERO; 8];
        step_positive_p(&mut pp, &p, 1e-3, &[0.0; 8]);
        assert!(pp.iter().all(|v| *v == Complex64::ZERO));
        let mut w = [Complex64::ZERO; 4];
        step_wigner(&mut w, &p, 1e-3, &[0.0; 8]);
        assert!(w.iter().all(|v| *v == Complex64::ZERO));
    }

    #[test]
    fn positive_p_initial_state_is_the_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        match sample_initial(Representation::PositiveP, &mut rng) {
            TrajectoryState::PositiveP(s) => assert!(s.iter().all(|v| *v == Complex64::ZERO)),
            _ => panic!("wrong representation"),
        }
    }

    #[test]
    fn wigner_initial_ensemble_has_half_photon_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut mean_sqr = [0.0; 4];
        let mut mean_x = [0.0; 4];
        let mut var_x = [0.0; 4];
        for _ in 0..n {
            if let TrajectoryState::TruncatedWigner(s) =
                sample_initial(Representation::TruncatedWigner, &mut rng)
            {
                for (m, v) in s.iter().enumerate() {
                    mean_sqr[m] += v.norm_sqr();
                    let x = 2.0 * v.re;
                    mean_x[m] += x;
                    var_x[m] += x * x;
                }
            }
        }
        for m in 0..4 {
            // <|a|^2> = 0.5 with Monte Carlo error ~ 3 sigma
            let avg = mean_sqr[m] / n as f64;
            assert!((avg - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt() * 2.0, "avg {avg}");
            // quadrature x = 2 Re a has unit vacuum variance
            let v = var_x[m] / n as f64 - (mean_x[m] / n as f64).powi(2);
            assert!((v - 1.0).abs() < 0.02, "var {v}");
        }
    }

    #[test]
    fn noiseless_stepping_converges_to_the_oscillating_state() {
        // both steppers with zero noise follow the classical flow
        let p = standard(1.5 * EPS_C);
        let target = steady_state(&p, Branch::Plus, 0.0).unwrap();
        let dt = 1e-3;
        let steps = 60_000;

        let seed = Complex64::new(1e-3, 0.0);
        let mut w = [seed, seed, seed, Complex64::ZERO];
        for _ in 0..steps {
            step_wigner(&mut w, &p, dt, &[0.0; 8]);
        }
        for (got, want) in w.iter().zip([target.alpha1, target.alpha2, target.alpha3, target.beta])
        {
            assert!(
                (got.norm() - want.norm()).abs() / want.norm().max(1.0) < 1e-6,
                "wigner modulus {} vs {}",
                got.norm(),
                want.norm()
            );
        }

        // doubled variables seeded symmetrically stay conjugate and land
        // on the same attractor
        let mut pp = [seed, seed, seed, seed, seed, seed, Complex64::ZERO, Complex64::ZERO];
        for _ in 0..steps {
            step_positive_p(&mut pp, &p, dt, &[0.0; 8]);
        }
        for (k, want) in [(0usize, target.alpha1), (2, target.alpha2), (4, target.alpha3), (6, target.beta)]
        {
            assert!((pp[k].norm() - want.norm()).abs() / want.norm().max(1.0) < 1e-6);
            assert!((pp[k] - pp[k + 1].conj()).norm() < 1e-9, "conjugate pair {k}");
        }
    }

    #[test]
    fn ensemble_is_deterministic_and_thread_count_independent() {
        let p = standard(0.5 * EPS_C);
        let mut cfg = SdeConfig::new(Representation::TruncatedWigner, 0.5, 96, 99);
        cfg.dt = 5e-3;
        cfg.record_every = 20;
        cfg.batch_size = 16;
        let a = run_ensemble(&p, &cfg).unwrap();
        let b = run_ensemble(&p, &cfg).unwrap();
        let c = run_ensemble_sequential(&p, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn wigner_vacuum_ensemble_stays_at_zero_intensity() {
        let p = standard(0.0);
        let mut cfg = SdeConfig::new(Representation::TruncatedWigner, 2.0, 4000, 5);
        cfg.dt = 2e-3;
        cfg.record_every = 250;
        let m = run_ensemble(&p, &cfg).unwrap();
        let last = m.records.last().unwrap();
        for mode in 0..4 {
            // reordered intensity of vacuum is zero; raw Wigner value 0.5
            assert!(last.intensity[mode].abs() < 0.02, "intensity {}", last.intensity[mode]);
        }
        // quadrature variances stay at the vacuum value 1
        for k in [0, 1, 2, 6, 7, 8] {
            assert!((last.quad_cov[k] - 1.0).abs() < 0.1, "cov[{k}] = {}", last.quad_cov[k]);
        }
        assert_eq!(m.n_divergent, 0);
        assert!(!m.unreliable);
    }

    #[test]
    fn divergence_counter_excludes_and_reports() {
        let p = standard(0.5 * EPS_C);
        let mut cfg = SdeConfig::new(Representation::TruncatedWigner, 1.0, 50, 11);
        cfg.dt = 5e-3;
        // bound far below the pump amplitude: every trajectory trips it
        cfg.divergence_bound = Some(1.0);
        match run_ensemble(&p, &cfg) {
            Err(Error::AllTrajectoriesDiverged(n)) => assert_eq!(n, 50),
            other => panic!("expected total divergence, got {other:?}"),
        }
        // a bound that only some trajectories cross still yields moments
        cfg.divergence_bound = Some(52.0);
        let m = run_ensemble(&p, &cfg).unwrap();
        assert_eq!(m.n_used + m.n_divergent, 50);
        assert!(m.records.iter().all(|r| r.intensity.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn standard_error_shrinks_with_trajectory_count() {
        let p = standard(0.5 * EPS_C);
        let mut small = SdeConfig::new(Representation::TruncatedWigner, 4.0, 800, 3);
        small.dt = 2e-3;
        small.record_every = 500;
        let mut large = small;
        large.n_traj = 3200;
        let ms = run_ensemble(&p, &small).unwrap();
        let ml = run_ensemble(&p, &large).unwrap();
        let last = ms.records.len() - 1;
        // quadrupling n_traj should halve standard errors, up to noise
        let se_s: f64 = ms.records[last].quad_cov_se.iter().sum();
        let se_l: f64 = ml.records[last].quad_cov_se.iter().sum();
        let ratio = se_s / se_l;
        assert!(ratio > 1.3 && ratio < 3.2, "ratio {ratio}");
    }

    #[test]
    fn critical_slowing_down_near_threshold() {
        // time for mode 3 to reach half its final intensity grows sharply
        // just above threshold
        let half_time = |eps_factor: f64| {
            let p = standard(eps_factor * EPS_C);
            let mut cfg = SdeConfig::new(Representation::TruncatedWigner, 40.0, 160, 21);
            cfg.dt = 2e-3;
            cfg.record_every = 100;
            let m = run_ensemble(&p, &cfg).unwrap();
            let last = m.records.last().unwrap().intensity[2];
            let target = 0.5 * last;
            m.times
                .iter()
                .zip(&m.records)
                .find(|(_, r)| r.intensity[2] >= target)
                .map(|(t, _)| *t)
                .unwrap()
        };
        let fast = half_time(1.5);
        let slow = half_time(1.05);
        assert!(slow > 2.0 * fast, "half times {fast} vs {slow}");
    }
}
