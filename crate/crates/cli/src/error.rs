use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Core(#[from] mlcrf_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error("stale manifest for {image_id}: proposals do not regenerate from the scene logits")]
    StaleManifest { image_id: String },

    #[error("region {region_id} of {image_id} has no logit file{}", .path.as_ref().map(|p| format!(" ({})", p.display())).unwrap_or_default())]
    MissingRegionLogits {
        image_id: String,
        region_id: usize,
        path: Option<PathBuf>,
    },

    #[error("image id sets differ: {0}")]
    IdMismatch(String),

    #[error("parameter grid is empty")]
    EmptyGrid,
}

impl PipelineError {
    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;
