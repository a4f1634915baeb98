use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: subsystem dimensions must be at least 2")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operators live on different Hilbert spaces ({left:?} vs {right:?})")]
    SpaceMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("slot {slot} out of range for a space with {slots} subsystems")]
    SlotOutOfRange { slot: usize, slots: usize },

    #[error("Hamiltonian is not Hermitian (relative residual {0:.3e})")]
    NotHermitian(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("channel index {index} out of range ({channels} channels)")]
    InvalidChannel { index: usize, channels: usize },

    #[error("unknown bath `{0}`")]
    UnknownBath(String),

    #[error("steady state is not unique (kernel dimension {0})")]
    NonUniqueSteadyState(usize),

    #[error("bordered Liouvillian is singular; the steady state is not unique")]
    SingularLiouvillian,

    #[error("steady-state residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    Convergence { residual: f64, tol: f64 },

    #[error("state is not a valid density matrix: {0}")]
    InvalidState(String),

    #[error("dominant tilted eigenvalue is not isolated at counting field {chi:.3e}")]
    BranchAmbiguity { chi: f64 },

    #[error("mean current {mean:.3e} is indistinguishable from zero; uncertainty undefined")]
    NearZeroCurrent { mean: f64 },

    #[error("model has no coherent cavity drive")]
    MissingDrive,

    #[error("entropy production for this framework needs the cavity heat current")]
    MissingCavityCurrent,

    #[error("expected a real value, imaginary residue {0:.3e}")]
    NotReal(f64),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
