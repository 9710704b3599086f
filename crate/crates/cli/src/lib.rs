pub mod config;
pub mod experiments;

pub use config::{default_config, Experiment, ExperimentConfig};
pub use experiments::{run_experiment, RunOutput};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] funnelguard::Error),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Config(_) | CliError::Io { .. } => "config",
        }
    }

    /// The single line printed on failure.
    pub fn report_line(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("error[{}] {msg}", self.category())
    }
}
