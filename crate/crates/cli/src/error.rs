use std::fmt;

/// Marks a failure caused by the user's input or flags (exit code 2).
#[derive(Debug)]
pub struct UserError(pub anyhow::Error);

impl fmt::Display for UserError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UserError {}

pub trait OrUser<T> {
    fn user(self) -> anyhow::Result<T>;
}

impl<T, E: Into<anyhow::Error>> OrUser<T> for Result<T, E> {
    fn user(self) -> anyhow::Result<T> {
        self.map_err(|e| anyhow::Error::new(UserError(e.into())))
    }
}

pub fn user_error(msg: impl fmt::Display) -> anyhow::Error {
    anyhow::Error::new(UserError(anyhow::anyhow!("{msg}")))
}
