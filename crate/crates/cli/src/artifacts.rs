//! Output directory layout and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use bmvd_core::config::ExperimentConfig;
use serde::Serialize;

use crate::Failure;

/// Version of the manifest and report layouts.
pub const SCHEMA_VERSION: u32 = 1;

pub const MANIFEST: &str = "manifest.json";
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const REPORT: &str = "report.json";

/// Record of one run, sufficient to repeat it.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub schema_version: u32,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub git_describe: String,
    pub wall_time_s: f64,
    pub threads: usize,
    pub passed: bool,
    pub artifacts: Vec<String>,
    pub config: &'a ExperimentConfig,
}

/// Output of `git describe --always --dirty`, or `unknown` outside a repository.
pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Writes files into an output directory and remembers their names.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("cannot write {}: {e}", path.display()))
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(OutDir { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    /// Writes the resolved configuration and the manifest, which lists every earlier artifact.
    pub fn finish(
        mut self,
        config: &ExperimentConfig,
        command: &str,
        wall_time: Duration,
        passed: bool,
    ) -> Result<(), Failure> {
        self.write(RESOLVED_CONFIG, &config.to_toml_string()?)?;
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: config.seed,
            git_describe: git_describe(),
            wall_time_s: wall_time.as_secs_f64(),
            threads: rayon::current_num_threads(),
            passed,
            artifacts: self.written.clone(),
            config,
        };
        self.write_json(MANIFEST, &manifest)
    }
}
