use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qtlab_core::cli_io::{bundled_names, run, CliError, Command, Format, RunOptions};
use qtlab_core::rational::{parse_q, Q};

#[derive(Parser)]
#[command(name = "qtlab", version, about = "Quasi-tree and coned-off metric experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check projection axioms of the scenario's families.
    CheckAxioms(Args),
    /// Build the quasi-tree and validate its distance formula.
    BuildQuasitree(Args),
    /// Fit special-path constants against the oracle metric.
    SpecialPath(Args),
    /// Verify fiber-line axioms and the vertical distance formula.
    VerifyFibers(Args),
    /// Validate the coned-off or relative distance formula.
    VerifyConeoff(Args),
    /// Fit quasi-isometry constants of the product embedding.
    VerifyEmbedding(Args),
    /// Word-length distortion profiles of lattice elements.
    Distortion(Args),
    /// Every step that applies to the scenario.
    All(Args),
    /// List bundled scenarios.
    Scenarios,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Dot,
}

#[derive(clap::Args)]
struct Args {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    scenario: String,
    #[arg(long = "K", value_parser = rational)]
    k: Option<Q>,
    #[arg(long, value_parser = rational)]
    r: Option<Q>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Extra rendering written next to the JSON reports.
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    #[arg(long, default_value = "qtlab-out")]
    out: PathBuf,
}

fn rational(s: &str) -> Result<Q, String> {
    parse_q(s).map_err(|e| e.to_string())
}

fn execute(command: Command, args: Args) -> Result<bool, CliError> {
    let opts = RunOptions {
        k: args.k,
        r: args.r,
        window: args.window,
        samples: args.samples,
        seed: args.seed,
        format: match args.format {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
            FormatArg::Dot => Format::Dot,
        },
        out: args.out,
    };
    let manifest = run(command, &args.scenario, &opts)?;
    for step in &manifest.steps {
        for r in &step.reports {
            println!("{} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.headline);
        }
        if let Some(e) = &step.error {
            println!("FAIL {}: {e}", step.step);
        }
    }
    println!("{} {} on {} -> {}", if manifest.pass { "PASS" } else { "FAIL" }, manifest.command, manifest.scenario, opts.out.display());
    Ok(manifest.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::CheckAxioms(a) => (Command::CheckAxioms, a),
        Cmd::BuildQuasitree(a) => (Command::BuildQuasitree, a),
        Cmd::SpecialPath(a) => (Command::SpecialPath, a),
        Cmd::VerifyFibers(a) => (Command::VerifyFibers, a),
        Cmd::VerifyConeoff(a) => (Command::VerifyConeoff, a),
        Cmd::VerifyEmbedding(a) => (Command::VerifyEmbedding, a),
        Cmd::Distortion(a) => (Command::Distortion, a),
        Cmd::All(a) => (Command::All, a),
        Cmd::Scenarios => {
            for n in bundled_names() {
                println!("{n}");
            }
            return ExitCode::SUCCESS;
        }
    };
    match execute(command, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
