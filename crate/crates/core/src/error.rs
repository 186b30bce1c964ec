use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no spectral weight survives on the detection state")]
    EmptySpectrum,

    #[error("singular evaluation: {0}")]
    SingularEvaluation(String),

    #[error("detection state is an eigenstate; Zeno time is infinite")]
    InfiniteZenoTime,

    #[error("resonant tau={tau}: two phases differ by {gap:.3e}")]
    Resonance { tau: f64, gap: f64 },

    #[error("pole search failed: {0}")]
    PoleSearchFailure(String),

    #[error("moments undefined for p_det={p_det:.3e}")]
    UndefinedMoments { p_det: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("correction invalid for p_det={p_det} (needs p_det > 3/4)")]
    CorrectionInvalid { p_det: f64 },

    #[error("insufficient data: found {found} maxima, need {needed}")]
    InsufficientData { found: usize, needed: usize },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature did not reach tolerance {target:.1e} (achieved {achieved:.3e})")]
    Accuracy { achieved: f64, target: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Resonance { .. }
                | Error::PoleSearchFailure(_)
                | Error::UndefinedMoments { .. }
                | Error::CorrectionInvalid { .. }
                | Error::InsufficientData { .. }
                | Error::Accuracy { .. }
                | Error::SingularEvaluation(_)
                | Error::InfiniteZenoTime
                | Error::EmptySpectrum
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
