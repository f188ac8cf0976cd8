use std::fmt;

use jointfit_core::error::Category;

/// Failure of one run; the variant decides the exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

/// Renders as `error[<kind>]: <message>` on one line.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = self.message().split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, "error[{}]: {}", self.tag(), one_line)
    }
}

impl From<jointfit_core::Error> for CliError {
    fn from(e: jointfit_core::Error) -> Self {
        match e.category() {
            Category::Data => CliError::Data(e.to_string()),
            Category::Numerical => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(format!("invalid JSON: {e}"))
    }
}
