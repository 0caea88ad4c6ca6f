use thiserror::Error;

/// Errors produced anywhere in the annealing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("system size {n_spins} exceeds the limit of {limit} spins for {what}")]
    SizeLimit {
        n_spins: usize,
        limit: usize,
        what: &'static str,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("Ising ground state is degenerate at zero field; degenerate basis states: {states:?}")]
    DegenerateIsing { states: Vec<String> },

    #[error("near-degenerate ground state at gamma = {gamma} (gap {gap:e}); transverse-field ground states should be unique")]
    NearDegenerate { gamma: f64, gap: f64 },

    #[error("eigensolver did not converge: {0}")]
    Eigensolver(String),

    #[error("non-finite amplitude at t = {t}")]
    NonFinite { t: f64 },

    #[error("annealing not started: s(t) = 0 at t = {t}")]
    AnnealingNotStarted { t: f64 },

    #[error("schedule is not certified: {0}")]
    Uncertified(String),

    #[error("analytic tail diverges: {0}")]
    TailDivergence(String),

    #[error("underdetermined gap fit: {0}")]
    Underdetermined(String),

    #[error("provenance mismatch: report {report} vs trajectory {trajectory}")]
    Provenance { report: String, trajectory: String },

    #[error("random problem generation failed after {retries} retries; increase the local field strength")]
    RetriesExhausted { retries: usize },

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
