use thiserror::Error;

use crate::powermodel::ClockConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("frequency {mhz} MHz is not a declared level for the {source_kind} clock source")]
    UnknownLevel { mhz: f64, source_kind: &'static str },
    #[error("invalid clock configuration: {0}")]
    InvalidConfig(String),
    #[error("interval {index} assigns more than one state to {component}")]
    Overlap { index: usize, component: &'static str },
    #[error("no DVFS target for task `{0}`")]
    UnknownTask(String),
    #[error("order {value} for {name} outside 0..=14")]
    OutOfRange { name: &'static str, value: u32 },
    #[error("frame of {0} bytes exceeds the 127 byte PSDU limit")]
    FrameTooLarge(usize),
    #[error("channel access failure after {0} backoffs")]
    ChannelAccessFailure(u32),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("unsupported CoAP method `{0}`")]
    UnsupportedMethod(String),
    #[error("run shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(cfg: &ClockConfig, why: &str) -> Self {
        Error::InvalidConfig(format!("{cfg}: {why}"))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
