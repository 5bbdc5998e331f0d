//! External transpiler plugins, used as a baseline to compare against
//! database migration.
//!
//! A plugin is any command that reads SQL on stdin and writes the rewritten
//! SQL to stdout when called as `<cmd> --from <dialect> --to <dialect>`.

use std::io::Write;
use std::process::{Command, Stdio};

use xdialect_core::Dialect;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone)]
pub struct Transpiler {
    program: String,
    args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TranspileOutcome {
    Ok(String),
    Failed(String),
}

impl TranspileOutcome {
    pub fn sql(&self) -> Option<&str> {
        match self {
            TranspileOutcome::Ok(s) => Some(s),
            TranspileOutcome::Failed(_) => None,
        }
    }
}

impl Transpiler {
    /// Split a shell-style command line such as `python3 -m my_tool`.
    pub fn parse(command: &str) -> Result<Self> {
        let mut words = shlex::split(command)
            .ok_or_else(|| HarnessError::Config(format!("cannot parse plugin command '{command}'")))?
            .into_iter();
        let program = words.next().ok_or_else(|| HarnessError::Config("plugin command is empty".into()))?;
        Ok(Transpiler { program, args: words.collect() })
    }

    /// Run the plugin once. A program that cannot be started is a
    /// configuration error; everything else the plugin does is an outcome.
    pub fn transpile(&self, sql: &str, from: &Dialect, to: &Dialect) -> Result<TranspileOutcome> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .args(["--from", from.id(), "--to", to.id()])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| HarnessError::Config(format!("cannot run plugin '{}': {e}", self.program)))?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        // a plugin may exit without reading; the broken pipe is its answer
        let writer = std::thread::spawn({
            let sql = sql.to_string();
            move || {
                let _ = stdin.write_all(sql.as_bytes());
            }
        });
        let out = child.wait_with_output()?;
        let _ = writer.join();
        if !out.status.success() {
            let err = String::from_utf8_lossy(&out.stderr);
            return Ok(TranspileOutcome::Failed(format!("plugin exited with {}: {}", out.status, err.trim())));
        }
        let text = String::from_utf8_lossy(&out.stdout).trim().to_string();
        if text.is_empty() {
            return Ok(TranspileOutcome::Failed("plugin produced no output".into()));
        }
        Ok(TranspileOutcome::Ok(text))
    }
}

/// Share of queries the plugin could rewrite.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Coverage {
    pub attempted: u64,
    pub succeeded: u64,
}

impl Coverage {
    pub fn record(&mut self, outcome: &TranspileOutcome) {
        self.attempted += 1;
        if matches!(outcome, TranspileOutcome::Ok(_)) {
            self.succeeded += 1;
        }
    }

    pub fn fraction(&self) -> Option<f64> {
        (self.attempted > 0).then(|| self.succeeded as f64 / self.attempted as f64)
    }
}
