//! Config echoes: every command writes the fully resolved arguments it ran
//! with, and `replay` reads them back.

use crate::args::{Command, EvalCommand, TrainCommand, VerifyCommand};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Bad arguments that clap cannot catch; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Serialize, Deserialize)]
struct Echo {
    tool: String,
    version: String,
    command: Command,
}

fn main_output(c: &Command) -> Option<&Path> {
    match c {
        Command::Gen(a) => Some(&a.out),
        Command::Train(t) => Some(&t.parts().1.out),
        Command::LearnAction(a) => Some(&a.out),
        Command::Eval(EvalCommand::Inverse(a)) => Some(&a.out),
        Command::Eval(EvalCommand::Drift(a)) => Some(&a.out),
        Command::Eval(EvalCommand::Traverse(a)) => Some(&a.out),
        Command::Eval(EvalCommand::Matrices(a)) => a.out.as_deref(),
        Command::ReproduceAll(a) => Some(&a.out),
        Command::Verify(_) | Command::Replay { .. } => None,
    }
}

fn name(c: &Command) -> &'static str {
    match c {
        Command::Gen(_) => "gen",
        Command::Train(TrainCommand::ForwardVae(_)) => "train-forward-vae",
        Command::Train(TrainCommand::CciVae(_)) => "train-cci-vae",
        Command::Train(TrainCommand::Ae(_)) => "train-ae",
        Command::LearnAction(_) => "learn-action",
        Command::Verify(VerifyCommand::Sb(_)) => "verify-sb",
        Command::Verify(VerifyCommand::Theorems(_)) => "verify-theorems",
        Command::Eval(EvalCommand::Inverse(_)) => "eval-inverse",
        Command::Eval(EvalCommand::Matrices(_)) => "eval-matrices",
        Command::Eval(EvalCommand::Drift(_)) => "eval-drift",
        Command::Eval(EvalCommand::Traverse(_)) => "eval-traverse",
        Command::ReproduceAll(_) => "reproduce-all",
        Command::Replay { .. } => "replay",
    }
}

/// `<out>.run.json` next to the main output, or `symlab-<command>.run.json`
/// in the working directory for commands that only print.
pub fn default_path(c: &Command) -> PathBuf {
    match (c, main_output(c)) {
        (Command::ReproduceAll(_), Some(dir)) => dir.join("reproduce-all.run.json"),
        (_, Some(out)) => {
            let mut s = out.as_os_str().to_owned();
            s.push(".run.json");
            PathBuf::from(s)
        }
        (_, None) => PathBuf::from(format!("symlab-{}.run.json", name(c))),
    }
}

pub fn write(c: &Command, path: Option<&Path>) -> Result<()> {
    let path = path.map_or_else(|| default_path(c), Path::to_path_buf);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let echo = Echo {
        tool: "symlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: c.clone(),
    };
    let text = serde_json::to_string_pretty(&echo)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Command> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let echo: Echo = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("{} is not a config echo: {e}", path.display())))?;
    Ok(echo.command)
}
