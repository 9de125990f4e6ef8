//! Run configuration: an optional YAML file overridden by command-line flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use hra_core::backend::{HttpBackend, HttpConfig, LlmBackend, MockBackend, Recording, ReplayBackend, RetryPolicy};
use hra_core::exec::{ExecConfig, JoinStrategy, Templates};
use hra_core::optimizer::CostParams;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Rule-based answers from `--mock-rules`, or "no" to everything.
    #[default]
    Mock,
    /// Recorded responses looked up by prompt hash.
    Replay,
    /// Chat-completions endpoint from HRA_LLM_URL / HRA_LLM_API_KEY / HRA_LLM_MODEL.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub catalog: Option<PathBuf>,
    pub backend: BackendKind,
    pub mock_rules: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub parallelism: usize,
    pub timeout_secs: f64,
    pub join_strategy: JoinStrategy,
    pub cost_config: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub seed: u64,
    pub max_retries: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            catalog: None,
            backend: BackendKind::Mock,
            mock_rules: None,
            replay: None,
            record: None,
            parallelism: 10,
            timeout_secs: 3600.0,
            join_strategy: JoinStrategy::Auto,
            cost_config: None,
            templates: None,
            seed: 0,
            max_retries: 3,
        }
    }
}

/// Flags shared by every command. Each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// YAML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Catalog file listing the CSV tables.
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// JSON rules for the mock backend.
    #[arg(long, global = true)]
    pub mock_rules: Option<PathBuf>,
    /// JSON-lines file of recorded responses for the replay backend.
    #[arg(long, global = true)]
    pub replay: Option<PathBuf>,
    /// Append every backend call to this JSON-lines file.
    #[arg(long, global = true)]
    pub record: Option<PathBuf>,
    /// Concurrent LLM calls within one operator.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Per-query timeout in seconds.
    #[arg(long, global = true)]
    pub timeout: Option<f64>,
    #[arg(long, global = true)]
    pub join_strategy: Option<JoinStrategy>,
    /// YAML file overriding cost-model coefficients.
    #[arg(long, global = true)]
    pub cost_config: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[arg(long, global = true)]
    pub templates: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Retries after a failed or malformed LLM answer.
    #[arg(long, global = true)]
    pub max_retries: Option<u32>,
}

impl RunConfig {
    pub fn resolve(args: &GlobalArgs) -> Result<RunConfig, CliError> {
        let mut c = match &args.config {
            Some(path) => {
                let text = read(path)?;
                let mut c: RunConfig = serde_yaml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                // Paths in a config file are relative to the file.
                let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
                for p in [&mut c.catalog, &mut c.mock_rules, &mut c.replay, &mut c.record, &mut c.cost_config, &mut c.templates]
                    .into_iter()
                    .flatten()
                {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
                c
            }
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($field:ident <- $arg:ident),*) => {
                $(if let Some(v) = &args.$arg { c.$field = v.clone().into(); })*
            };
        }
        take!(catalog <- catalog, mock_rules <- mock_rules, replay <- replay, record <- record,
              cost_config <- cost_config, templates <- templates);
        if let Some(v) = args.backend {
            c.backend = v;
        }
        if let Some(v) = args.parallelism {
            c.parallelism = v;
        }
        if let Some(v) = args.timeout {
            c.timeout_secs = v;
        }
        if let Some(v) = args.join_strategy {
            c.join_strategy = v;
        }
        if let Some(v) = args.seed {
            c.seed = v;
        }
        if let Some(v) = args.max_retries {
            c.max_retries = v;
        }
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<(), CliError> {
        if self.parallelism < 1 {
            return Err(CliError::Config("parallelism must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(CliError::Config("timeout must be a positive number of seconds".into()));
        }
        Ok(())
    }

    pub fn catalog_path(&self) -> Result<&Path, CliError> {
        self.catalog.as_deref().ok_or_else(|| CliError::Config("no catalog given (use --catalog)".into()))
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy { max_retries: self.max_retries }
    }

    pub fn cost_params(&self) -> Result<CostParams, CliError> {
        match &self.cost_config {
            None => Ok(CostParams::default()),
            Some(p) => serde_yaml::from_str(&read(p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
        }
    }

    pub fn exec_config(&self) -> Result<ExecConfig, CliError> {
        let templates = match &self.templates {
            None => Templates::default(),
            Some(dir) => Templates::with_overrides(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?,
        };
        Ok(ExecConfig {
            parallelism: self.parallelism,
            join_strategy: self.join_strategy,
            retry: self.retry_policy(),
            timeout: Some(Duration::from_secs_f64(self.timeout_secs)),
            templates,
            ..ExecConfig::default()
        })
    }

    pub fn backend(&self) -> Result<Backend, CliError> {
        let inner: Box<dyn LlmBackend> = match self.backend {
            BackendKind::Mock => match &self.mock_rules {
                Some(p) => Box::new(
                    MockBackend::from_rules_json(&read(p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
                ),
                None => Box::new(MockBackend::fixed("no")),
            },
            BackendKind::Replay => {
                let p = self.replay.as_ref().ok_or_else(|| CliError::Config("the replay backend needs --replay".into()))?;
                Box::new(ReplayBackend::load(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?)
            }
            BackendKind::Http => Box::new(
                HttpConfig::from_env()
                    .and_then(HttpBackend::new)
                    .map_err(|e| CliError::Config(format!("HTTP backend: {e}")))?,
            ),
        };
        Ok(match &self.record {
            Some(path) => {
                let rec = Arc::new(Recording::new(inner));
                Backend { llm: rec.clone(), recording: Some((rec, path.clone())) }
            }
            None => Backend { llm: Arc::from(inner), recording: None },
        })
    }
}

pub struct Backend {
    pub llm: Arc<dyn LlmBackend>,
    recording: Option<(Arc<Recording<Box<dyn LlmBackend>>>, PathBuf)>,
}

impl Backend {
    /// Writes recorded calls, if recording was requested.
    pub fn finish(&self) -> Result<(), CliError> {
        if let Some((rec, path)) = &self.recording {
            rec.save(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
