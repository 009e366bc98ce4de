mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            eprintln!("defcomp: missing command or argument; run `defcomp --help` for usage");
            return ExitCode::from(1);
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let mut lines = rendered.lines().map(str::trim).filter(|l| !l.is_empty());
            let first = lines.next().unwrap_or("invalid arguments");
            let mut message = first.strip_prefix("error: ").unwrap_or(first).to_string();
            // "the following required arguments were not provided:" names them on the next line
            if message.ends_with(':') {
                if let Some(next) = lines.next() {
                    message = format!("{message} {next}");
                }
            }
            eprintln!("defcomp: {message}");
            return ExitCode::from(1);
        }
    };

    match commands::run(&cli) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("defcomp: {w}");
            }
            // A closed pipe is not worth a panic.
            let _ = std::io::stdout().lock().write_all(out.stdout.as_bytes());
            ExitCode::from(out.exit)
        }
        Err(e) => {
            eprintln!("defcomp: {e}");
            ExitCode::from(1)
        }
    }
}
