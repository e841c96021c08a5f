use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ckt_cli::{cmd_build, cmd_export, cmd_query, run_repl, CliError, ExportWhat, Format, Session};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ckt",
    version,
    about = "Build and query a program-comprehension knowledge graph"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the graph described by a project manifest.
    Build {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Run one query against a built graph.
    Query {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value = "table")]
        format: Format,
        /// Print only the number of result rows.
        #[arg(long)]
        count: bool,
        #[arg(long)]
        verbose: bool,
        text: String,
    },
    /// Interactive query session.
    Repl {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value = "table")]
        format: Format,
        #[arg(long)]
        verbose: bool,
    },
    /// Print the persisted triples or graph statistics.
    Export {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        what: ExportWhat,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn open(graph: &Path, verbose: bool) -> Result<Session, CliError> {
    let mut stderr = io::stderr();
    Session::open(graph, verbose.then_some(&mut stderr as &mut dyn Write))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut stdout = io::stdout().lock();
    let text = match cli.command {
        Command::Build { manifest } => cmd_build(&manifest)?,
        Command::Query {
            graph,
            format,
            count,
            verbose,
            text,
        } => {
            let session = open(&graph, verbose)?;
            match cmd_query(&session, &text, format, count) {
                Ok(out) => out,
                // Records output stays machine-readable on failure too.
                Err(e) if format == Format::Records => {
                    let _ = writeln!(stdout, "{}", e.message);
                    return Ok(e.code);
                }
                Err(e) => return Err(e),
            }
        }
        Command::Repl {
            graph,
            format,
            verbose,
        } => {
            let session = open(&graph, verbose)?;
            return Ok(run_repl(&session, io::stdin().lock(), stdout, format));
        }
        Command::Export { graph, what, out } => {
            let body = cmd_export(&graph, what)?;
            if let Some(p) = out {
                std::fs::write(&p, body)
                    .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
                return Ok(0);
            }
            body
        }
    };
    let _ = stdout.write_all(text.as_bytes());
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
