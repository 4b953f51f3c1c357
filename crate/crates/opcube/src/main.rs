use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use opcube::json;
use opcube::verify::{self, Report, Scenario};

#[derive(Parser)]
#[command(
    name = "opcube",
    about = "Exact checks of homotopy-excision and Blakers-Massey connectivity \
             estimates for operad algebras in rational chain complexes"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario suite and write a JSON report. Without --config the
    /// bundled default suite runs.
    Check {
        /// JSON config: a list of scenarios, or {"scenarios": [...]}.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report output path.
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Offset added to every scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print one worked example: excision, blakers-massey, or dual.
    Demo { which: String },
    /// Print the homology and connectivity of a complex.
    Homology {
        /// Complex JSON: {"dims": {degree: dim}, "d": {degree: matrix}}.
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    Wrapped { scenarios: Vec<Scenario> },
    Bare(Vec<Scenario>),
}

fn load_config(path: &PathBuf) -> Result<Vec<Scenario>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
        format!("config parse error at line {}, column {}: {e}", e.line(), e.column())
    })?;
    let parsed: ConfigFile = serde_json::from_value(value)
        .map_err(|e| format!("config does not match the scenario schema: {e}"))?;
    Ok(match parsed {
        ConfigFile::Wrapped { scenarios } => scenarios,
        ConfigFile::Bare(v) => v,
    })
}

fn run_check(
    config: Option<PathBuf>,
    out: PathBuf,
    jobs: usize,
    seed: Option<u64>,
) -> Result<bool, String> {
    let mut scenarios = match &config {
        Some(path) => load_config(path)?,
        None => verify::default_suite(),
    };
    if let Some(s) = seed {
        for sc in scenarios.iter_mut() {
            sc.seed = sc.seed.wrapping_add(s);
        }
    }
    let report: Report = verify::run_suite(&scenarios, jobs).map_err(|e| e.to_string())?;
    for s in &report.scenarios {
        println!(
            "{} {:5} {:20} predicted {:>5}  measured {:>5}  ({} ms)",
            if s.pass { "pass" } else { "FAIL" },
            s.theorem.to_string(),
            s.id,
            s.predicted.to_string(),
            s.measured.to_string(),
            s.millis
        );
    }
    for r in &report.rejected {
        println!("rejected {}: {}", r.id, r.reason);
    }
    let passed = report.scenarios.iter().filter(|s| s.pass).count();
    println!(
        "{passed}/{} verdicts pass, {} rejected",
        report.scenarios.len(),
        report.rejected.len()
    );
    let text = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    std::fs::write(&out, text).map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    println!("report written to {}", out.display());
    Ok(report.all_pass())
}

fn run_homology(input: PathBuf) -> Result<(), String> {
    let text = std::fs::read_to_string(&input)
        .map_err(|e| format!("cannot read {}: {e}", input.display()))?;
    let parsed: json::ComplexJson = serde_json::from_str(&text).map_err(|e| {
        format!("input parse error at line {}, column {}: {e}", e.line(), e.column())
    })?;
    let c = json::complex_from_json(&parsed).map_err(|e| e.to_string())?;
    let h = c.homology_all();
    if h.is_empty() {
        println!("homology: 0 (acyclic)");
    } else {
        for (n, v) in &h {
            println!("H_{n} = Q^{v}");
        }
    }
    println!("connectivity: {}", c.connectivity());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Check { config, out, jobs, seed } => match run_check(config, out, jobs, seed) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("some verdicts failed");
                return ExitCode::FAILURE;
            }
            Err(e) => Err(e),
        },
        Cmd::Demo { which } => verify::demo(&which).map(|text| print!("{text}")).map_err(|e| e.to_string()),
        Cmd::Homology { input } => run_homology(input),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
