use thiserror::Error;

/// A configuration value that failed validation, with the dotted path of the
/// offending field.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid config at `{path}`: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Prefixes the path with the name of the enclosing section.
    pub fn within(mut self, parent: &str) -> Self {
        self.path = format!("{parent}.{}", self.path);
        self
    }
}

pub(crate) fn ensure(cond: bool, path: &str, message: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::new(path, message))
    }
}
