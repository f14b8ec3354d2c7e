mod commands;
mod config;
mod error;
mod summary;

use std::fs;
use std::io::Write;
use std::process::ExitCode;

use crate::config::{Cli, Format, RunConfig};
use crate::error::CliError;

fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else { return Ok(()) };
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        eprintln!("note: built without the parallel feature; --threads {n} ignored");
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if cli.selftest {
        set_threads(cli.opts.threads)?;
        let (pass, report) = commands::selftest();
        print!("{report}");
        return if pass {
            Ok(())
        } else {
            Err(gtspec_core::Error::Inconsistency("selftest failed".into()).into())
        };
    }
    let Some(command) = cli.command else {
        return Err(CliError::Usage("a subcommand is required (try --help)".into()));
    };
    let cfg = RunConfig::resolve(command, cli.opts)?;
    set_threads(cfg.threads)?;
    let out = commands::run(&cfg)?;
    let csv = out.csv.unwrap_or_default();
    if let Some(path) = &cfg.output {
        fs::write(path, &csv).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let printed = match cfg.format {
        Format::Csv if cfg.output.is_none() => write!(lock, "{csv}"),
        Format::Csv => Ok(()),
        Format::Summary => write!(lock, "{}", out.summary),
    };
    printed.map_err(|source| CliError::Io {
        path: "stdout".into(),
        source,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::parse_layers(std::env::args_os()) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gtspec: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
