//! Command-line driver.
//!
//! Usage:
//!   dflnn <gen|train|rollout|eval> --config PATH [--seed INT] [--out DIR]
//!         [--model dflnn|glnn|node] [--k INT] [--force-off]
//!
//! Flags override config fields (last one wins). Thread count comes from
//! the DFLNN_THREADS environment variable.

use std::process::ExitCode;

use dflnn::driver::{run, ExperimentConfig, ModelKind};

struct Args {
    command: String,
    config: Option<String>,
    seed: Option<u64>,
    out: Option<String>,
    model: Option<ModelKind>,
    k: usize,
    force_off: bool,
}

fn parse_args() -> Result<Args, String> {
    let mut argv = std::env::args().skip(1);
    let command = argv.next().ok_or_else(usage)?;
    if command == "--help" || command == "-h" || command == "help" {
        return Err(usage());
    }
    let mut args = Args {
        command,
        config: None,
        seed: None,
        out: None,
        model: None,
        k: 35,
        force_off: false,
    };
    while let Some(flag) = argv.next() {
        match flag.as_str() {
            "--config" => args.config = Some(take(&mut argv, "--config")?),
            "--seed" => {
                args.seed = Some(
                    take(&mut argv, "--seed")?
                        .parse()
                        .map_err(|e| format!("--seed: {e}"))?,
                )
            }
            "--out" => args.out = Some(take(&mut argv, "--out")?),
            "--k" => {
                args.k = take(&mut argv, "--k")?
                    .parse()
                    .map_err(|e| format!("--k: {e}"))?
            }
            "--model" => {
                args.model = Some(match take(&mut argv, "--model")?.as_str() {
                    "dflnn" => ModelKind::Dflnn,
                    "glnn" => ModelKind::Glnn,
                    "node" => ModelKind::Node,
                    other => return Err(format!("--model: unknown model `{other}`")),
                })
            }
            "--force-off" => args.force_off = true,
            other => return Err(format!("unknown flag `{other}`\n{}", usage())),
        }
    }
    Ok(args)
}

fn take(argv: &mut impl Iterator<Item = String>, flag: &str) -> Result<String, String> {
    argv.next().ok_or_else(|| format!("{flag} needs a value"))
}

fn usage() -> String {
    "usage: dflnn <gen|train|rollout|eval> --config PATH [--seed INT] [--out DIR] \
     [--model dflnn|glnn|node] [--k INT] [--force-off]"
        .to_string()
}

fn main() -> ExitCode {
    let args = match parse_args() {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::FAILURE;
        }
    };
    let config_path = match &args.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("error: --config PATH is required");
            return ExitCode::FAILURE;
        }
    };
    let text = match std::fs::read_to_string(&config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {config_path}: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut cfg = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    if let Some(model) = args.model {
        cfg.model = model;
    }
    match run(&args.command, &cfg, args.k, args.force_off) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
