use thiserror::Error;

pub type Result<T> = std::result::Result<T, QbmError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QbmError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation requested inside the guard window of a zero of χ_q.
    #[error("t = {t} lies within the guard window of the drift-frequency pole at t = {pole}")]
    Pole { t: f64, pole: f64 },

    /// A Matsubara sum that does not converge term by term.
    #[error("divergent series: {0}")]
    Divergence(String),

    /// A Matsubara frequency coincides with a relaxation rate λ₁ or λ₂.
    #[error("Matsubara frequency {nu_n} resonates with relaxation rate {lambda}")]
    Resonance { nu_n: f64, lambda: f64 },

    #[error("quadrature did not converge on [{a}, {b}]: estimated error {est_error:e} after {evaluations} evaluations")]
    NonConvergence {
        a: f64,
        b: f64,
        est_error: f64,
        evaluations: usize,
    },

    /// The diffusion coefficient is negative where a square root is needed.
    #[error("negative diffusion D = {d:e} at t = {t}; the Euler-Maruyama ensemble requires D >= 0")]
    NegativeDiffusion { t: f64, d: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

impl QbmError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        QbmError::Domain(msg.into())
    }
}
