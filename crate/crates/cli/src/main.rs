mod args;
mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Bad flags, config or input data: exit code 1.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

const OK: u8 = 0;
const VALIDATION: u8 = 1;
const RUNTIME: u8 = 2;

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err.chain().any(|e| {
        e.is::<Invalid>() || e.downcast_ref::<xmodal_core::Error>().is_some_and(xmodal_core::Error::is_validation)
    });
    if validation {
        VALIDATION
    } else {
        RUNTIME
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { VALIDATION } else { OK });
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a).map(|_| OK),
        Command::Train(a) => commands::train(a).map(|_| OK),
        Command::Evaluate(a) => commands::evaluate(a).map(|_| OK),
        Command::Gradcheck(a) => commands::gradcheck(a).map(|ok| if ok { OK } else { RUNTIME }),
        Command::Validate(a) => {
            let strict = a.strict;
            commands::validate(a).map(|ok| if ok || !strict { OK } else { VALIDATION })
        }
        Command::Report(a) => commands::report(a).map(|_| OK),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
