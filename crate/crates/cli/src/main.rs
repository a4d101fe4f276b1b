mod commands;
mod config;
mod record;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::record::{write_json, CliError, ErrorRecord, Inputs, Outcome, Record, ERROR_SCHEMA, RECORD_SCHEMA};

/// Experiments with matrix-valued symbols on compact Lie groups and their
/// Grauert tubes. Each run writes one JSON record; the exit code reports the
/// outcome (0 ok, 1 I/O, 2 invalid config, 3 certificate failure,
/// 4 divergence detected, 5 no parametrix).
#[derive(Parser)]
#[command(name = "grauert", version)]
struct Cli {
    /// JSON experiment configuration; defaults are used for absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for the record, tables and artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace the configured seeds by this one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dual cutoff on ⟨ξ⟩.
    #[arg(long, global = true)]
    cutoff: Option<f64>,
    /// Tube radius.
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Do not print the record on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, Debug)]
enum Command {
    /// List the irreps within the cutoff.
    Dual,
    /// Apply Op(p) to test functions.
    Apply,
    /// Exact symbol product and its composition defect.
    Compose,
    /// Exact adjoint symbol and its duality defect.
    Adjoint,
    /// Ellipticity check on the tube.
    Elliptic,
    /// Neumann-series parametrix and its residual-order table.
    Parametrix,
    /// Asymptotic sum of holomorphic symbols.
    Asum,
    /// Complex power of a multiplier by contour integration.
    Power,
    /// e^{−t A^z} by contour integration.
    Semigroup,
    /// Poisson transform into the tube with HH^s norms.
    Poisson,
    /// Defect of the extension diagram for an operator.
    Diagram,
    /// Half-wave kernel on a doubling ladder of cutoffs.
    Halfwave,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Dual => "dual",
            Command::Apply => "apply",
            Command::Compose => "compose",
            Command::Adjoint => "adjoint",
            Command::Elliptic => "elliptic",
            Command::Parametrix => "parametrix",
            Command::Asum => "asum",
            Command::Power => "power",
            Command::Semigroup => "semigroup",
            Command::Poisson => "poisson",
            Command::Diagram => "diagram",
            Command::Halfwave => "halfwave",
        }
    }
}

fn resolve(cli: &Cli, inputs: &mut Inputs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path, inputs)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(c) = cli.cutoff {
        cfg.cutoff = c;
    }
    if let Some(e) = cli.eps {
        cfg.epsilon = e;
    }
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(command: Command, cfg: &ExperimentConfig, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    match command {
        Command::Dual => commands::dual(cfg),
        Command::Apply => commands::apply(cfg, inputs),
        Command::Compose => commands::compose(cfg, inputs),
        Command::Adjoint => commands::adjoint(cfg, inputs),
        Command::Elliptic => commands::elliptic(cfg),
        Command::Parametrix => commands::parametrix_table(cfg),
        Command::Asum => commands::asum(cfg),
        Command::Power => commands::power(cfg),
        Command::Semigroup => commands::semigroup(cfg),
        Command::Poisson => commands::poisson(cfg, inputs),
        Command::Diagram => commands::diagram(cfg, inputs),
        Command::Halfwave => commands::halfwave(cfg),
    }
}

fn emit(op: &str, cfg: &ExperimentConfig, inputs: &Inputs, out: Outcome, quiet: bool) -> Result<u8, CliError> {
    // the output location does not change the result, so it stays out of the digest
    let mut resolved = cfg.clone();
    resolved.output = None;
    let digest = inputs.digest(&serde_json::to_value(&resolved)?);
    let code = out.exit_code();
    let record = Record {
        schema: RECORD_SCHEMA,
        op,
        inputs_digest: digest,
        value: out.value,
        defect: out.defect,
        certificate: out.certificate,
    };
    if let Some(dir) = &cfg.output {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        write_json(&dir.join(format!("{op}.json")), &record)?;
        for (name, csv) in &out.tables {
            let path = dir.join(format!("{name}.csv"));
            fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
        }
        for (name, value) in &out.artifacts {
            write_json(&dir.join(format!("{op}.{name}.json")), value)?;
        }
    }
    if !quiet {
        let text = serde_json::to_string_pretty(&record)?;
        // a closed pipe (`grauert … | head`) is not an error of the run
        let _ = writeln!(std::io::stdout().lock(), "{text}");
    }
    Ok(code)
}

fn report_error(op: &str, err: &CliError, out: Option<&Path>) -> u8 {
    let code = err.kind.exit_code();
    let rec = ErrorRecord { schema: ERROR_SCHEMA, op, kind: err.kind, exit_code: code, message: &err.message };
    let text = serde_json::to_string(&rec).expect("error records serialize");
    eprintln!("{text}");
    if let Some(dir) = out {
        if fs::create_dir_all(dir).is_ok() {
            let _ = write_json(&dir.join(format!("{op}.error.json")), &rec);
        }
    }
    code
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let op = cli.command.name();
    let mut inputs = Inputs::default();
    let result = resolve(&cli, &mut inputs).and_then(|cfg| {
        let out = dispatch(cli.command, &cfg, &mut inputs)?;
        emit(op, &cfg, &inputs, out, cli.quiet)
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => ExitCode::from(report_error(op, &e, cli.out.as_deref())),
    }
}
