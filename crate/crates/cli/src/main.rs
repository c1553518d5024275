mod args;
mod commands;
mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::{json, Value};

use args::{Cli, Command};
use commands::Outcome;
use output::{error_json, error_object, exit_code, Manifest};

fn main() {
    std::process::exit(run(std::env::args_os()));
}

fn emit(value: &Value) {
    let mut out = std::io::stdout().lock();
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    let _ = writeln!(out, "{text}");
}

fn run(argv: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            emit(
                &json!({ "error": error_object("Usage", e.to_string().trim().to_string(), json!({})) }),
            );
            return 1;
        }
    };
    if let Some(n) = cli.threads {
        let built = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
        if let Err(e) = built {
            emit(
                &json!({ "error": error_object("Threads", e.to_string(), json!({ "threads": n })) }),
            );
            return 1;
        }
    }
    let seed = cli.seed;
    let (name, input, q): (&'static str, &Path, Option<u64>) = match &cli.command {
        Command::Validate { input } => ("validate", input, None),
        Command::Feas { input } => ("feas", input, None),
        Command::Solve(a) => ("solve", &a.input, None),
        Command::Code(a) => ("code", &a.input, a.q),
        Command::Simulate(a) => ("simulate", &a.code.input, a.code.q),
        Command::Oracle { input } => ("oracle", input, None),
    };
    let mut manifest = Manifest::new(name, input);
    manifest.param("seed", seed);
    let outcome = commands::load(input, &mut manifest, q).and_then(|problem| match &cli.command {
        Command::Validate { .. } => Ok(commands::validate(&problem, seed)),
        Command::Feas { .. } => commands::feas(&problem),
        Command::Solve(a) => commands::solve(&problem, a, &mut manifest),
        Command::Code(a) => commands::code(&problem, a, seed, &mut manifest),
        Command::Simulate(a) => commands::run_simulation(&problem, a, seed, &mut manifest),
        Command::Oracle { .. } => commands::oracle(&problem),
    });
    match outcome {
        Ok(Outcome { result, exit }) => {
            emit(&json!({ "manifest": manifest.to_json(), "result": result }));
            exit
        }
        Err(err) => {
            emit(&json!({ "manifest": manifest.to_json(), "error": error_json(&err) }));
            exit_code(&err)
        }
    }
}
