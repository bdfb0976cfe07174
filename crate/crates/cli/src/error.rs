use thiserror::Error;

use crate::mask::MaskError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("mask: {0}")]
    Mask(#[from] MaskError),

    /// The planning problem has no feasible point; `family` names the first
    /// violated constraint family.
    #[error("infeasible: {family} constraints cannot be met ({detail})")]
    Infeasible { family: String, detail: String },

    #[error("solver hit the iteration limit ({iterations} iterations)")]
    MaxIter { iterations: usize },

    #[error(transparent)]
    Core(#[from] meltplan_core::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Mask(_) => 2,
            Self::Infeasible { .. } => 3,
            Self::MaxIter { .. } => 4,
            Self::Core(e) => match e {
                meltplan_core::Error::InvalidParameter { .. }
                | meltplan_core::Error::Parse { .. }
                | meltplan_core::Error::EmptyMask
                | meltplan_core::Error::EmptyDomain => 2,
                meltplan_core::Error::Infeasible(_) => 3,
                _ => 1,
            },
            Self::Io(_) => 1,
        }
    }
}
