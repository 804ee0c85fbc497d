use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Failure of a command, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<foa_enhance::Error> for CliError {
    fn from(e: foa_enhance::Error) -> Self {
        use foa_enhance::Error as E;
        let msg = e.to_string();
        match e {
            _ if e.is_numerical() => CliError::Numerical(msg),
            E::NonFinite(_) => CliError::Numerical(msg),
            E::InvalidArgument(_) | E::AngularFloor { .. } | E::StftConfig(_) => CliError::Config(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<hound::Error> for CliError {
    fn from(e: hound::Error) -> Self {
        CliError::Data(format!("wav: {e}"))
    }
}

/// Attaches a path to an I/O-like error.
pub fn at(path: &std::path::Path) -> impl Fn(CliError) -> CliError + '_ {
    move |e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    }
}
