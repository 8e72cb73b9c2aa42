use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{at_path, CliResult};
use crate::settings::Settings;

/// Record of one command run, written as `key = value` lines next to its
/// outputs. Feeding it back through `--config` repeats the run.
pub struct RunManifest {
    command: &'static str,
    args: Vec<String>,
    started: Instant,
    artifacts: Vec<(String, PathBuf)>,
}

impl RunManifest {
    pub fn start(command: &'static str) -> Self {
        RunManifest { command, args: std::env::args().skip(1).collect(), started: Instant::now(), artifacts: Vec::new() }
    }

    pub fn artifact(&mut self, name: impl Into<String>, path: impl Into<PathBuf>) {
        self.artifacts.push((name.into(), path.into()));
    }

    pub fn render(&self, settings: &Settings) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "run.command = {}", self.command);
        let _ = writeln!(s, "run.version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "run.seed = {}", settings.seed);
        let _ = writeln!(s, "run.args = {}", self.args.join(" "));
        let _ = writeln!(s, "run.wall_time_s = {:.3}", self.started.elapsed().as_secs_f64());
        for (k, v) in settings.pairs() {
            let _ = writeln!(s, "config.{k} = {v}");
        }
        for (k, p) in &self.artifacts {
            let _ = writeln!(s, "artifact.{k} = {}", p.display());
        }
        s
    }

    /// Writes `<dir>/<command>.manifest` and returns its path.
    pub fn write(&self, dir: &Path, settings: &Settings) -> CliResult<PathBuf> {
        let path = dir.join(format!("{}.manifest", self.command));
        at_path(std::fs::write(&path, self.render(settings)), &path)?;
        Ok(path)
    }
}
