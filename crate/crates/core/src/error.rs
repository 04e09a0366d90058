use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("input schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Generation(#[from] crate::synthgen::GenerationError),
    #[error(transparent)]
    Render(#[from] crate::synthgen::RenderError),
    #[error(transparent)]
    Eval(#[from] crate::evalkit::EvalError),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
