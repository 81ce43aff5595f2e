//! Command implementations behind the `benchconc` binary. Each command reads
//! its inputs, writes tables under `--out`, and returns a JSON summary.

pub mod args;
mod commands;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use benchconc::ingest::SnapshotManifest;
use serde::Serialize;
use serde_json::Value;

pub use args::{Cli, Command};

/// Written to `run_report.json` after every successful command.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub parameters: Value,
    pub seed: u64,
    pub input_manifests: Vec<SnapshotManifest>,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub duration_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Value,
    pub warnings: Vec<String>,
    pub report: Option<RunReport>,
}

/// Output bookkeeping shared by the commands.
pub(crate) struct Session {
    out: PathBuf,
    outputs: Vec<PathBuf>,
    manifests: Vec<SnapshotManifest>,
    warnings: Vec<String>,
}

impl Session {
    fn new(out: &Path) -> Self {
        Session {
            out: out.to_path_buf(),
            outputs: Vec::new(),
            manifests: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub(crate) fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub(crate) fn record_manifest(&mut self, m: SnapshotManifest) {
        self.manifests.push(m);
    }

    /// Creates `name` under the output directory and hands a buffered writer
    /// to `fill`.
    pub(crate) fn write<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> benchconc::Result<()>,
    {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        fill(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush().with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path);
        Ok(())
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let started = Instant::now();
    let mut session = Session::new(&cli.out);
    let summary = match &cli.command {
        Command::Authority(a) => commands::authority(cli, a, &mut session)?,
        Command::Graph(a) => commands::graph(cli, a, &mut session)?,
        Command::Simulate(a) => commands::simulate(cli, a, &mut session)?,
        Command::Sweep(a) => commands::sweep(cli, a, &mut session)?,
        Command::Analytics(a) => commands::analytics(cli, a, &mut session)?,
        Command::Validate(a) => {
            let summary = commands::validate(cli, a, &mut session)?;
            return Ok(Outcome {
                summary,
                warnings: session.warnings,
                report: None,
            });
        }
    };

    for path in &session.outputs {
        anyhow::ensure!(path.is_file(), "declared output {} is missing", path.display());
    }
    let report = RunReport {
        command: cli.command.name().to_string(),
        parameters: serde_json::to_value(cli)?,
        seed: cli.seed,
        input_manifests: session.manifests.clone(),
        outputs: session.outputs.clone(),
        warnings: session.warnings.clone(),
        duration_seconds: started.elapsed().as_secs_f64(),
    };
    let path = cli.out.join("run_report.json");
    let text = serde_json::to_string_pretty(&report)? + "\n";
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(Outcome {
        summary,
        warnings: session.warnings,
        report: Some(report),
    })
}

/// 2 for bad parameters, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let invalid = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<benchconc::Error>(),
            Some(benchconc::Error::InvalidParameter(_))
        )
    });
    if invalid {
        2
    } else {
        1
    }
}
