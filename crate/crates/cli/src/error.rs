use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid experiment: {0}")]
    Validation(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("manifest in {dir} belongs to a different experiment (digest {found}, expected {expected})")]
    DigestMismatch { dir: String, found: String, expected: String },

    #[error("{failed} of {total} tasks failed; see the manifest for details")]
    TasksFailed { failed: usize, total: usize },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] delocsim::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        use delocsim::Error as E;
        match self {
            CliError::Validation(_) => "validation",
            CliError::Parse { .. } => "parse",
            CliError::DigestMismatch { .. } => "digest_mismatch",
            CliError::TasksFailed { .. } => "task_failure",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                E::InvalidArgument(_) | E::Capacity { .. } => "validation",
                E::Parse { .. } => "parse",
                E::Io(_) => "io",
                E::Domain(_) => "domain",
                E::Numeric(_) | E::DegenerateSpacing(..) => "numeric",
                E::Convergence(_) | E::PartialResult { .. } => "convergence",
                E::InsufficientData(_) | E::Rank(_) => "insufficient_data",
                E::Conservation { .. } => "conservation",
            },
        }
    }

    /// Validation problems exit with 2, everything else with 1.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "validation" => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({ "kind": self.kind(), "message": self.to_string() });
        let location = match self {
            CliError::Parse { path, line, .. } => Some((path, *line)),
            CliError::Core(delocsim::Error::Parse { path, line, .. }) => Some((path, *line)),
            _ => None,
        };
        if let Some((path, line)) = location {
            body["path"] = json!(path);
            body["line"] = json!(line);
        }
        json!({ "error": body })
    }
}
