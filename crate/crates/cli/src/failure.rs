use std::fmt;
use std::path::PathBuf;

/// Why a command stopped, mapped onto the process exit status.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    /// The field was still written.
    NotConverged(String),
    MissingDependency(Vec<PathBuf>),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::NotConverged(_) => 2,
            Failure::MissingDependency(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(msg) => write!(f, "{msg}"),
            Failure::NotConverged(msg) => write!(f, "did not converge: {msg}"),
            Failure::MissingDependency(paths) => {
                write!(f, "missing prerequisite field file(s):")?;
                for p in paths {
                    write!(f, " {}", p.display())?;
                }
                write!(f, " (solve them first or pass --with-deps)")
            }
        }
    }
}

impl From<weaponeer::Error> for Failure {
    fn from(e: weaponeer::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}
