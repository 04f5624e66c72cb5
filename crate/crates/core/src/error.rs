use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model violates one of its invariants (negative intensity, non-PSD diffusion, ...).
    #[error("model error: {0}")]
    Model(String),

    /// The time step is too large for the explicit update.
    #[error("step-size error: {0}")]
    StepSize(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A click was recorded on a channel whose expected intensity is zero.
    #[error("impossible event: {0}")]
    ImpossibleEvent(String),

    /// Forward and backward quantities have no overlap.
    #[error("degenerate record: {0}")]
    DegenerateRecord(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("ill-conditioned kernel: {0}")]
    IllConditioned(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that come from the numerics rather than from the input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::StepSize(_)
                | Error::ImpossibleEvent(_)
                | Error::DegenerateRecord(_)
                | Error::Singular(_)
                | Error::IllConditioned(_)
                | Error::Numerical(_)
        )
    }
}
