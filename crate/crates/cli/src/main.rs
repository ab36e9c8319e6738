use std::process::ExitCode;

use clap::Parser;
use cms_cli::args::Cli;
use cms_cli::output::{render, write_artifacts};
use cms_cli::{commands, error_document, error_message, exit_code};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match commands::run(&cli.command) {
        Ok(outcome) => {
            let json = render(&outcome.report);
            for note in &outcome.notes {
                eprint!("{note}");
                if !note.ends_with('\n') {
                    eprintln!();
                }
            }
            print!("{json}");
            if let Some(dir) = outcome.out.clone() {
                if let Err(e) = write_artifacts(&dir, name, &json, &outcome.artifacts) {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(1);
                }
            }
            match &outcome.failure {
                Some(msg) => {
                    eprintln!("{msg}");
                    ExitCode::from(2)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            let code = exit_code(&e);
            let kind = if code == 2 { "config" } else { "runtime" };
            let msg = error_message(&e);
            eprintln!("error: {msg}");
            print!("{}", render(&error_document(name, kind, &msg)));
            ExitCode::from(code as u8)
        }
    }
}
