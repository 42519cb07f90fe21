use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("world generation failed: {0}")]
    Generation(String),
    #[error("pose ({x}, {y}) lies outside the {n}x{n} world")]
    OutsideWorld { x: i32, y: i32, n: usize },
    #[error("autodiff: {0}")]
    Autodiff(String),
    #[error("training diverged: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
