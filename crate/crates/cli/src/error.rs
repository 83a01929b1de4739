use fsc_core::Error as CoreError;

/// Exit statuses; listed in `fsc --help`.
pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_INPUT: i32 = 4;
pub const EXIT_INFEASIBLE: i32 = 5;

pub const EXIT_CODES_HELP: &str = "\
Exit status:
  0  success
  1  runtime failure (training diverged, I/O error, internal error)
  2  usage error (unknown subcommand or flag, missing argument)
  3  configuration error (unknown key, unparseable or invalid value)
  4  input data error (missing, malformed or too short CSV, corrupt checkpoint or registry index)
  5  fleet requirement infeasible
Errors are printed to stderr as a single line:
  fsc: error code=<status> kind=<kind>: <message>";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(CoreError::Io(e))
    }
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Core(e) => match e {
                CoreError::Infeasible { .. } => EXIT_INFEASIBLE,
                CoreError::Parse { .. }
                | CoreError::Checksum(_)
                | CoreError::CorruptIndex { .. }
                | CoreError::DuplicateId(_)
                | CoreError::InsufficientData(_)
                | CoreError::Csv(_)
                | CoreError::Json(_) => EXIT_INPUT,
                CoreError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_INPUT,
                _ => EXIT_RUNTIME,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.code() {
            EXIT_USAGE => "usage",
            EXIT_CONFIG => "config",
            EXIT_INPUT => "input",
            EXIT_INFEASIBLE => "infeasible",
            _ => "runtime",
        }
    }

    /// `fsc: error code=N kind=K: message`, newlines folded.
    pub fn line(&self) -> String {
        let message = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        format!("fsc: error code={} kind={}: {message}", self.code(), self.kind())
    }
}
