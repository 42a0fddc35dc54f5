use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fiber spec: {0}")]
    InvalidSpec(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("grid cannot resolve the mode set: {0}")]
    Resolution(String),
    #[error("mode {label} is not guided at {wavelength_nm} nm")]
    NotGuided { label: String, wavelength_nm: f64 },
    #[error("degenerate excitation: {0}")]
    DegenerateExcitation(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("singular normal equations: a positive ridge parameter is required")]
    RegularizationRequired,
    #[error("seed {seed} could not satisfy {what}")]
    Seed { seed: u64, what: String },
    #[error("malformed {kind}: {detail}")]
    Format { kind: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
