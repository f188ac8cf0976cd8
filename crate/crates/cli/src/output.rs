use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Where artifacts go: a directory, or stdout for the primary table only.
pub enum Sink {
    Stdout,
    Dir(PathBuf),
}

impl Sink {
    /// Checks the destination without creating it, so a long computation
    /// does not end in a clash.
    pub fn new(out: &str, force: bool) -> Result<Self, CliError> {
        if out == "-" {
            return Ok(Sink::Stdout);
        }
        let path = PathBuf::from(out);
        if path.exists() {
            if !path.is_dir() {
                return Err(CliError::Data(format!("output path `{out}` exists and is not a directory")));
            }
            if !force {
                return Err(CliError::Data(format!(
                    "output directory `{out}` already exists (pass --force to overwrite)"
                )));
            }
        }
        Ok(Sink::Dir(path))
    }

    /// Writes the table that `--out -` sends to stdout.
    pub fn primary(&self, name: &str, contents: &str) -> Result<(), CliError> {
        match self {
            Sink::Stdout => {
                let mut out = std::io::stdout().lock();
                out.write_all(contents.as_bytes())?;
                out.flush()?;
                Ok(())
            }
            Sink::Dir(_) => self.file(name, contents),
        }
    }

    /// Writes a secondary artifact; dropped when writing to stdout.
    pub fn file(&self, name: &str, contents: &str) -> Result<(), CliError> {
        if let Sink::Dir(dir) = self {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, contents)?;
        }
        Ok(())
    }

    pub fn is_stdout(&self) -> bool {
        matches!(self, Sink::Stdout)
    }
}

/// An input file read whole, with its digest for the run record.
pub struct Input {
    pub path: PathBuf,
    pub text: String,
    pub sha256: String,
}

pub fn read_input(path: &Path) -> Result<Input, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("cannot read `{}`: {e}", path.display())))?;
    let sha256 = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|_| CliError::Data(format!("`{}` is not UTF-8", path.display())))?;
    Ok(Input {
        path: path.to_path_buf(),
        text,
        sha256,
    })
}

/// Collects what `run.json` records about one invocation.
pub struct RunRecord {
    command: &'static str,
    seed: u64,
    threads: Option<usize>,
    config: Value,
    inputs: Vec<(String, String)>,
    started: SystemTime,
    clock: Instant,
}

impl RunRecord {
    pub fn new(command: &'static str, seed: u64, threads: Option<usize>) -> Self {
        Self {
            command,
            seed,
            threads,
            config: Value::Null,
            inputs: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    pub fn config<T: Serialize>(&mut self, config: &T) {
        self.config = serde_json::to_value(config).unwrap_or(Value::Null);
    }

    pub fn input(&mut self, input: &Input) {
        self.inputs.push((input.path.display().to_string(), input.sha256.clone()));
    }

    /// Digest of everything that determines the results: the command, the
    /// resolved configuration, the seed and the input contents. Paths,
    /// thread count and timing are left out.
    pub fn config_hash(&self) -> String {
        let digests: Vec<&str> = self.inputs.iter().map(|(_, h)| h.as_str()).collect();
        let canonical = json!({
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "inputs": digests,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }

    pub fn write(&self, sink: &Sink) -> Result<(), CliError> {
        if sink.is_stdout() {
            return Ok(());
        }
        let started = self.started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let inputs: Vec<Value> = self
            .inputs
            .iter()
            .map(|(p, h)| json!({ "path": p, "sha256": h }))
            .collect();
        let record = json!({
            "tool": "jointfit",
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": jointfit_core::VERSION,
            "command": self.command,
            "seed": self.seed,
            "threads": self.threads,
            "config_hash": self.config_hash(),
            "config": self.config,
            "inputs": inputs,
            "started_unix": started,
            "wall_time_seconds": self.clock.elapsed().as_secs_f64(),
        });
        sink.file("run.json", &(serde_json::to_string_pretty(&record)? + "\n"))
    }
}
