use serde::Serialize;

/// Failure of a CLI run. Validation problems exit with status 2, everything
/// else with 1.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation { field: Option<String>, message: String },
    Runtime(String),
}

#[derive(Serialize)]
struct ErrorDoc<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
    message: &'a str,
}

impl CliError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Validation { field: Some(field.into()), message: message.into() }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        CliError::Validation { field: None, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 2,
            CliError::Runtime(_) => 1,
        }
    }

    /// Machine-readable form written to standard error.
    pub fn to_json(&self) -> String {
        let doc = match self {
            CliError::Validation { field, message } => {
                ErrorDoc { error: "validation", field: field.as_deref(), message }
            }
            CliError::Runtime(message) => ErrorDoc { error: "runtime", field: None, message },
        };
        serde_json::to_string(&doc).expect("error document serialises")
    }

    /// Attaches a field name to a validation error that lacks one.
    pub fn in_field(self, name: &str) -> Self {
        match self {
            CliError::Validation { field: None, message } => CliError::field(name, message),
            other => other,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation { field: Some(field), message } => write!(f, "invalid `{field}`: {message}"),
            CliError::Validation { field: None, message } => write!(f, "invalid configuration: {message}"),
            CliError::Runtime(message) => f.write_str(message),
        }
    }
}

impl std::error::Error for CliError {}

impl From<exciton::Error> for CliError {
    fn from(e: exciton::Error) -> Self {
        match e {
            exciton::Error::InvalidInput(msg) => CliError::validation(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
