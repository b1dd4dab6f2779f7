use std::fmt;

use acdkit::AcdError;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_QUALITY: u8 = 3;
pub const EXIT_STAGE: u8 = 4;
pub const EXIT_MODEL: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(msg: impl fmt::Display) -> Self {
        Self { code: EXIT_INPUT, message: msg.to_string() }
    }

    pub fn quality(msg: impl fmt::Display) -> Self {
        Self { code: EXIT_QUALITY, message: msg.to_string() }
    }

    pub fn stage(stage: &str, msg: impl fmt::Display) -> Self {
        Self { code: EXIT_STAGE, message: format!("stage '{stage}' failed: {msg}") }
    }

    pub fn model(msg: impl fmt::Display) -> Self {
        Self { code: EXIT_MODEL, message: msg.to_string() }
    }

    /// Maps a library error raised while fitting or simulating a model.
    pub fn from_model_error(stage: &str, e: AcdError) -> Self {
        match e {
            AcdError::Parameter(_) | AcdError::NonStationary(_) | AcdError::Unsupported(_) => Self::model(e),
            AcdError::Validation(_) | AcdError::Domain(_) | AcdError::Empty(_) => {
                Self { code: EXIT_QUALITY, message: format!("{stage}: {e}") }
            }
            AcdError::Io(_) => Self::input(e),
            other => Self::stage(stage, other),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;
