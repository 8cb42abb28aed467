use thiserror::Error;

/// Errors produced by the solver and analysis routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Parameter or configuration values violate a documented invariant.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A steady state does not satisfy the mean-field equations for the
    /// supplied parameters.
    #[error("inconsistent steady state: mean-field residual {residual:.3e} exceeds {tolerance:.1e}")]
    InconsistentState { residual: f64, tolerance: f64 },

    /// The iterative eigenvalue solver failed to converge.
    #[error("eigenvalue solver did not converge")]
    EigenConvergence,

    /// Linearized spectra were requested at or above the oscillation
    /// threshold, where the fluctuation analysis is invalid.
    #[error("linearized spectra are not defined at or above threshold (epsilon = {epsilon}, threshold = {threshold})")]
    AboveThreshold { epsilon: f64, threshold: f64 },

    /// The resolvent matrix was singular at the requested frequency,
    /// which happens at marginally stable operating points.
    #[error("singular spectral matrix at omega = {omega} (marginal operating point)")]
    SingularSpectrum { omega: f64 },

    /// The quadrature transform received a matrix with imaginary parts
    /// beyond tolerance, signalling an inconsistent upstream spectrum.
    #[error("imaginary residue {residue:.3e} in quadrature transform exceeds {tolerance:.1e}")]
    ImaginaryResidue { residue: f64, tolerance: f64 },

    /// A gain optimization hit a zero variance denominator.
    #[error("zero variance denominator for quadrature Y{mode}")]
    ZeroVariance { mode: usize },

    /// Every trajectory of a stochastic run diverged.
    #[error("all {0} trajectories diverged; no moments available")]
    AllTrajectoriesDiverged(usize),
}

impl Error {
    /// True for errors caused by bad inputs rather than by the numerics
    /// of a valid problem. CLI layers map these to distinct exit codes.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidParams(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
