use std::process::ExitCode;

use clap::Parser;
use microrelay::cli::{execute, Cli, IO_ERROR};

/// Deeply recursive programs need more than the default main-thread stack.
const STACK_SIZE: usize = 512 * 1024 * 1024;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let worker = std::thread::Builder::new().stack_size(STACK_SIZE).spawn(move || {
        let stdout = std::io::stdout();
        match execute(&cli.command, &mut stdout.lock()) {
            Ok(()) => 0,
            Err(f) => {
                eprintln!("{}", f.message);
                f.code
            }
        }
    });
    let code = match worker.map(|h| h.join()) {
        Ok(Ok(code)) => code,
        _ => IO_ERROR,
    };
    ExitCode::from(code as u8)
}
