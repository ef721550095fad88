mod args;
mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::Parser;
use serde::Serialize;
use sparse_depth::io::{write_manifest, RunManifest};

use args::{AnalyzeCommand, Cli, Command};
use commands::Outcome;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match run(&cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn config<T: Serialize>(args: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(args)?)
}

fn run(cli: &Cli, argv: &[String]) -> Result<()> {
    let start = Instant::now();
    let (name, output, cfg, outcome): (&str, Option<&PathBuf>, _, Outcome) = match &cli.command {
        Command::Gen(a) => ("gen", Some(&a.output), config(a)?, commands::gen(a)?),
        Command::Sample(a) => ("sample", Some(&a.output), config(a)?, commands::sample(a)?),
        Command::Reconstruct(a) => ("reconstruct", Some(&a.output), config(a)?, commands::reconstruct_cmd(a)?),
        Command::Analyze(sub) => {
            let (name, out, cfg) = match sub {
                AnalyzeCommand::Cer(a) => ("analyze cer", None, config(a)?),
                AnalyzeCommand::Sign(a) => ("analyze sign", None, config(a)?),
                AnalyzeCommand::Envelope(a) => ("analyze envelope", a.output.as_ref(), config(a)?),
                AnalyzeCommand::Certify(a) => ("analyze certify", None, config(a)?),
            };
            (name, out, cfg, commands::analyze(sub)?)
        }
        Command::Bench(a) => ("bench", Some(&a.output), config(a)?, commands::bench(a)?),
        Command::Compress(a) => ("compress", Some(&a.output), config(a)?, commands::compress_cmd(a)?),
        Command::Decompress(a) => ("decompress", Some(&a.output), config(a)?, commands::decompress_cmd(a)?),
        Command::Superres(a) => ("superres", Some(&a.output), config(a)?, commands::superres(a)?),
        Command::Multiframe(a) => ("multiframe", Some(&a.output), config(a)?, commands::multiframe(a)?),
    };
    let manifest = RunManifest {
        command: name.to_string(),
        argv: argv.to_vec(),
        seed: outcome.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg,
        metrics: outcome.metrics,
        results: outcome.results,
        timing_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    let path = match (&cli.manifest, output) {
        (Some(p), _) => p.clone(),
        (None, Some(out)) => files::manifest_path_for(out),
        (None, None) => PathBuf::from(format!("{}.manifest.json", name.replace(' ', "-"))),
    };
    write_manifest(&path, &manifest)?;
    println!("{}", serde_json::to_string_pretty(&manifest.results)?);
    Ok(())
}
