use thiserror::Error;

/// Error type shared by grid construction, kinematics and the solvers.
///
/// Numeric payloads are carried as `f64` regardless of the scalar the caller
/// instantiated, so the type stays object-safe and printable everywhere.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("derivative capability error: requested vertical order {requested}, supported up to {supported}")]
    Capability { requested: usize, supported: usize },

    #[error("degenerate deformation: J = {j:.6e} at side {side}, node ({i1}, {i2}, {i3})")]
    Degeneracy {
        side: &'static str,
        i1: usize,
        i2: usize,
        i3: usize,
        j: f64,
    },

    #[error("density {rho:.6e} outside admissible range ({lo:.6e}, {hi:.6e}) of the pressure law")]
    DensityRange { rho: f64, lo: f64, hi: f64 },

    #[error("state norm {linf:.3e} exceeded the divergence ceiling {ceiling:.3e}")]
    Divergence { linf: f64, ceiling: f64 },

    #[error("ill-posed mode system at wavevector ({xi1:.6e}, {xi2:.6e}): {reason}")]
    IllPosedMode { xi1: f64, xi2: f64, reason: String },

    #[error("field shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("fit domain error: {0}")]
    FitDomain(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
