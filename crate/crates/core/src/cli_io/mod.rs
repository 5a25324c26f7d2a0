//! Scenario loading, pipeline dispatch and report emission for the `qtlab` binary.

mod emit;
mod pipelines;
mod scenario;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::rational::Q;

pub use emit::{emit, model_tags, Format, Report};
pub use pipelines::{working_k, Runner, STABILITY};
pub use scenario::{bundled_names, bundled_text, hex, FamilySetup, LatticeSetup, RelhypSetup, Scenario, ScenarioBody, ScenarioKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("report `{report}` has no {format} rendering")]
    UnsupportedFormat { report: String, format: String },
    #[error("{scenario}/{step}: {message}")]
    Step { scenario: String, step: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    CheckAxioms,
    BuildQuasitree,
    SpecialPath,
    VerifyFibers,
    VerifyConeoff,
    VerifyEmbedding,
    Distortion,
    All,
}

impl Command {
    /// Every concrete step, in the order `all` runs them.
    pub const STEPS: [Command; 7] = [
        Command::CheckAxioms,
        Command::BuildQuasitree,
        Command::SpecialPath,
        Command::VerifyFibers,
        Command::VerifyConeoff,
        Command::VerifyEmbedding,
        Command::Distortion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::CheckAxioms => "check-axioms",
            Command::BuildQuasitree => "build-quasitree",
            Command::SpecialPath => "special-path",
            Command::VerifyFibers => "verify-fibers",
            Command::VerifyConeoff => "verify-coneoff",
            Command::VerifyEmbedding => "verify-embedding",
            Command::Distortion => "distortion",
            Command::All => "all",
        }
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::STEPS
            .iter()
            .chain([Command::All].iter())
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| CliError::ConfigInvalid(format!("unknown command `{s}`")))
    }
}

/// Command-line overrides; `None` keeps the scenario value.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub k: Option<Q>,
    pub r: Option<Q>,
    pub window: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub format: Format,
    pub out: PathBuf,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { k: None, r: None, window: None, samples: None, seed: None, format: Format::Json, out: out.into() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportSummary {
    pub name: String,
    pub pass: bool,
    pub headline: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub step: String,
    pub pass: bool,
    pub reports: Vec<ReportSummary>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub scenario: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub steps: Vec<StepRecord>,
    pub outputs: Vec<OutputFile>,
    pub pass: bool,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Applies overrides and rejects combinations no pipeline accepts.
pub fn configure(mut sc: Scenario, opts: &RunOptions) -> Result<Scenario, CliError> {
    if let Some(k) = opts.k {
        if k < Q::from_integer(0) {
            return Err(CliError::ConfigInvalid("K must be non-negative".into()));
        }
        sc.k = Some(k);
    }
    if let Some(r) = opts.r {
        if r <= Q::from_integer(0) {
            return Err(CliError::ConfigInvalid("r must be positive".into()));
        }
        sc.r = Some(r);
    }
    if sc.kind == ScenarioKind::Cka && sc.r.is_some_and(|r| r != Q::from_integer(1)) {
        return Err(CliError::ConfigInvalid("cka scenarios cone fiber lines with r = 1".into()));
    }
    if let Some(w) = opts.window {
        sc.window = w;
    }
    if sc.window == 0 {
        return Err(CliError::ConfigInvalid("window must be at least 1".into()));
    }
    if let Some(s) = opts.samples {
        sc.samples = s;
    }
    if let Some(s) = opts.seed {
        sc.seed = s;
    }
    Ok(sc)
}

fn write_output(dir: &Path, file: &str, bytes: &[u8], outputs: &mut Vec<OutputFile>) -> Result<(), CliError> {
    std::fs::write(dir.join(file), bytes)?;
    outputs.push(OutputFile { file: file.to_string(), sha256: hex(&Sha256::digest(bytes)) });
    Ok(())
}

/// Runs one command (or `all`) on a scenario, writing reports and `manifest.json` under `opts.out`.
///
/// Step failures are recorded in the manifest; only configuration and I/O errors abort.
pub fn run(command: Command, scenario_arg: &str, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let started = unix_now();
    let sc = configure(Scenario::load(scenario_arg)?, opts)?;
    let runner = Runner::new(sc);
    let steps = if command == Command::All {
        runner.plan()
    } else if runner.applies(command) {
        vec![command]
    } else {
        return Err(CliError::ConfigInvalid(format!("{} does not apply to scenario {}", command.as_str(), runner.scenario.name)));
    };
    std::fs::create_dir_all(&opts.out)?;
    let mut records = Vec::new();
    let mut outputs = Vec::new();
    for step in steps {
        let clock = Instant::now();
        match runner.run_step(step) {
            Ok(reports) => {
                for r in &reports {
                    let (file, bytes) = emit(r, &runner.scenario, Format::Json)?;
                    write_output(&opts.out, &file, &bytes, &mut outputs)?;
                    if opts.format != Format::Json {
                        if let Ok((file, bytes)) = emit(r, &runner.scenario, opts.format) {
                            write_output(&opts.out, &file, &bytes, &mut outputs)?;
                        }
                    }
                }
                let summaries: Vec<ReportSummary> =
                    reports.iter().map(|r| ReportSummary { name: r.name.clone(), pass: r.pass, headline: r.headline.clone() }).collect();
                let pass = summaries.iter().all(|s| s.pass);
                records.push(StepRecord { step: step.as_str().into(), pass, reports: summaries, error: None, seconds: clock.elapsed().as_secs_f64() });
            }
            Err(e @ CliError::ConfigInvalid(_)) => return Err(e),
            Err(e) => records.push(StepRecord {
                step: step.as_str().into(),
                pass: false,
                reports: Vec::new(),
                error: Some(e.to_string()),
                seconds: clock.elapsed().as_secs_f64(),
            }),
        }
    }
    let manifest = RunManifest {
        tool: "qtlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.as_str().into(),
        scenario: runner.scenario.name.clone(),
        scenario_sha256: runner.scenario.sha256.clone(),
        seed: runner.scenario.seed,
        started_unix: started,
        finished_unix: unix_now(),
        pass: records.iter().all(|s| s.pass),
        steps: records,
        outputs,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(opts.out.join("manifest.json"), text)?;
    Ok(manifest)
}
