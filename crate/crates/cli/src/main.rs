mod manifest;
mod opts;
mod run;

use std::process::ExitCode;

use clap::Parser;

use dualgap::Error;
use opts::{Cli, Command};
use run::Ctx;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFinite(_) | Error::AuxDiverged { .. } => EXIT_NUMERIC,
        Error::Io { .. } => 1,
        _ => EXIT_CONFIG,
    }
}

fn load_config(path: &std::path::Path) -> dualgap::Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn dispatch(cli: &Cli, ctx: &Ctx) -> dualgap::Result<()> {
    match &cli.command {
        Command::Toygame(c) => run::toygame(ctx, c),
        Command::Train(a) => run::train_cmd(ctx, a),
        Command::Dg(a) => run::dg_cmd(ctx, a),
        Command::GridSearch(a) => run::grid_cmd(ctx, a),
        Command::Ablate(c) => run::ablate(ctx, c),
        Command::Controller(c) => run::controller(ctx, c),
        Command::Datasets(a) => run::datasets(ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let result = (|| {
        let file = cli.config.as_deref().map(load_config).transpose()?;
        let threads = cli
            .threads
            .or_else(|| file.as_ref()?.get("threads")?.as_u64().map(|t| t as usize))
            .unwrap_or(0);
        let ctx = Ctx {
            argv: std::env::args().collect(),
            file,
        };
        dualgap::search::with_threads(threads, || dispatch(&cli, &ctx))?
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
