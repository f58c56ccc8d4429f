use thiserror::Error;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("malformed message: {0}")]
    Malformed(String),

    #[error("invalid command: {0}")]
    Invalid(String),

    #[error("level out of range: {level} (model has {levels})")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("unknown model: {0}")]
    UnknownModel(String),

    #[error("no models loaded")]
    EmptyLibrary,

    #[error(transparent)]
    Core(#[from] hapto_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    WebSocket(#[from] tokio_tungstenite::tungstenite::Error),
}
