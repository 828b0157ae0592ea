use std::path::PathBuf;
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args};
use reqc_core::{BackendSpec, Budget, ProcessRunner};
use serde::Serialize;

/// Settings shared by every subcommand. Each one resolves from a flag, then
/// its environment variable, then the default.
#[derive(Debug, Clone, Args)]
pub struct Config {
    /// Compile workspace directory.
    #[arg(long, global = true, env = "REQC_WORKSPACE", default_value = "reqc-out")]
    pub workspace: PathBuf,
    /// Agent backend: `fixture:<path>` or `http`.
    #[arg(long, global = true, env = "REQC_BACKEND")]
    pub backend: Option<BackendSpec>,
    /// GenCode attempts per node.
    #[arg(long, global = true, env = "REQC_BUDGET", default_value_t = Budget::DEFAULT, value_parser = parse_budget)]
    pub budget: u32,
    /// Test runner: `process` or `process:<interpreter>`.
    #[arg(long, global = true, env = "REQC_RUNNER", default_value = "process")]
    pub runner: RunnerSpec,
    /// Port for `serve`.
    #[arg(long, global = true, env = "REQC_PORT", default_value_t = 7878)]
    pub port: u16,
}

fn parse_budget(s: &str) -> Result<u32, String> {
    let n: u32 = s.parse().map_err(|e| format!("{e}"))?;
    Budget::new(n).map(|b| b.max_attempts()).map_err(|_| "budget must be at least 1".to_owned())
}

impl Config {
    pub fn budget(&self) -> Budget {
        Budget::new(self.budget).expect("checked by the argument parser")
    }

    /// Key, value and origin of every setting, for `config show`.
    pub fn describe(&self, matches: &ArgMatches) -> Vec<Setting> {
        let origin = |id: &str| match matches.value_source(id) {
            Some(ValueSource::CommandLine) => "flag",
            Some(ValueSource::EnvVariable) => "env",
            Some(ValueSource::DefaultValue) => "default",
            _ => "unset",
        };
        let row = |key: &'static str, value: String| Setting {
            key,
            value,
            origin: origin(key),
        };
        vec![
            row("workspace", self.workspace.display().to_string()),
            row("backend", self.backend.as_ref().map_or_else(String::new, ToString::to_string)),
            row("budget", self.budget.to_string()),
            row("runner", self.runner.to_string()),
            row("port", self.port.to_string()),
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Setting {
    pub key: &'static str,
    pub value: String,
    pub origin: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunnerSpec {
    pub interpreter: Option<String>,
}

impl RunnerSpec {
    pub fn build(&self) -> ProcessRunner {
        ProcessRunner {
            interpreter: self.interpreter.clone(),
            parallel: false,
        }
    }
}

impl FromStr for RunnerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "process" => Ok(Self { interpreter: None }),
            Some(("process", interp)) if !interp.is_empty() => Ok(Self {
                interpreter: Some(interp.to_owned()),
            }),
            _ => Err(format!("runner {s:?}: expected \"process\" or \"process:<interpreter>\"")),
        }
    }
}

impl std::fmt::Display for RunnerSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.interpreter {
            None => f.write_str("process"),
            Some(i) => write!(f, "process:{i}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runner_specs() {
        assert_eq!("process".parse::<RunnerSpec>().unwrap().interpreter, None);
        let spec: RunnerSpec = "process:bash".parse().unwrap();
        assert_eq!(spec.interpreter.as_deref(), Some("bash"));
        assert_eq!(spec.to_string(), "process:bash");
        assert!("process:".parse::<RunnerSpec>().is_err());
        assert!("docker".parse::<RunnerSpec>().is_err());
    }

    #[test]
    fn budget_must_be_positive() {
        assert_eq!(parse_budget("5"), Ok(5));
        assert!(parse_budget("0").is_err());
        assert!(parse_budget("many").is_err());
    }
}
