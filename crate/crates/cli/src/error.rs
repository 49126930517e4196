use portion3d::dataset::DatasetError;
use portion3d::estimate::{PipelineFailure, Stage};
use portion3d::synth::SynthError;
use std::process::ExitCode;
use thiserror::Error;

/// Command failure, grouped by the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Missing or malformed input files, flags or manifest entries.
    #[error("{0}")]
    Input(String),
    /// Degenerate geometry: PnP, rectification or object pose.
    #[error("{0}")]
    Geometry(String),
    #[error("{0}")]
    Render(String),
    /// Every scene failed or there was nothing to evaluate.
    #[error("{0}")]
    Evaluation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Geometry(_) => 3,
            CliError::Render(_) => 4,
            CliError::Evaluation(_) => 5,
        }
    }

    pub fn to_exit_code(&self) -> ExitCode {
        ExitCode::from(self.exit_code())
    }

    pub(crate) fn input(e: impl std::fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<PipelineFailure> for CliError {
    fn from(f: PipelineFailure) -> Self {
        let msg = f.to_string();
        match f.stage {
            Stage::Input | Stage::Mesh | Stage::Energy => CliError::Input(msg),
            Stage::Pnp | Stage::Rectifier | Stage::ObjectPose => CliError::Geometry(msg),
            Stage::Render | Stage::Scale => CliError::Render(msg),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::AllScenesFailed(_) | DatasetError::Empty => CliError::Evaluation(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        let msg = format!("scene generation failed: {e}");
        match e {
            SynthError::FacingAway | SynthError::Geometry(_) | SynthError::Exhausted(_) => CliError::Geometry(msg),
            SynthError::Render(_) => CliError::Render(msg),
            SynthError::CornerOutOfView { .. }
            | SynthError::ObjectOutOfView
            | SynthError::InvalidArgument(_)
            | SynthError::Mesh(_) => CliError::Input(msg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use portion3d::estimate::{Diagnostics, EstimateError, StageError};

    fn failure(stage: Stage) -> PipelineFailure {
        PipelineFailure {
            scene: "s".into(),
            stage,
            error: StageError::Estimate(EstimateError::EmptyMask),
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn stage_codes() {
        let code = |s| CliError::from(failure(s)).exit_code();
        assert_eq!(code(Stage::Input), 2);
        assert_eq!(code(Stage::Pnp), 3);
        assert_eq!(code(Stage::Rectifier), 3);
        assert_eq!(code(Stage::ObjectPose), 3);
        assert_eq!(code(Stage::Render), 4);
        assert_eq!(CliError::from(DatasetError::AllScenesFailed(3)).exit_code(), 5);
        assert_eq!(CliError::from(DatasetError::Empty).exit_code(), 5);
        assert_eq!(CliError::from(SynthError::FacingAway).exit_code(), 3);
    }

    #[test]
    fn message_names_stage() {
        let msg = CliError::from(failure(Stage::Render)).to_string();
        assert!(msg.contains("stage render"), "{msg}");
    }
}
