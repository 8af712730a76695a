mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Machine-readable kind and a message for an error chain: context lines
/// down to the first library error, which contributes its bare detail.
fn describe(e: &anyhow::Error) -> (&'static str, String) {
    let mut parts = Vec::new();
    for cause in e.chain() {
        if let Some(v) = cause.downcast_ref::<commands::VerifyFailed>() {
            parts.push(v.to_string());
            return ("verify", parts.join(": "));
        }
        if let Some(err) = cause.downcast_ref::<gsconv_core::Error>() {
            parts.push(err.detail());
            return (err.kind(), parts.join(": "));
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            parts.push(io.to_string());
            return ("io", parts.join(": "));
        }
        parts.push(cause.to_string());
    }
    ("error", parts.join(": "))
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            e.print().ok();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: argument: {}", one_line(&e.to_string()));
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::VerifyGs(a) => commands::verify_gs(a),
        Command::Gen(a) => commands::gen(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval_cmd(a),
        Command::Profile(a) => commands::profile(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, msg) = describe(&e);
            eprintln!("error: {kind}: {}", one_line(&msg));
            ExitCode::FAILURE
        }
    }
}
