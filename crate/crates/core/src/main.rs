use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use sunnpest_core::cli::{run, Cli};

const EXIT_INPUT: u8 = 1;
const EXIT_INTERNAL: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = std::panic::catch_unwind(|| {
        let stdout = io::stdout();
        let mut out = io::BufWriter::new(stdout.lock());
        let mut err = io::stderr();
        let r = run(&cli, &mut out, &mut err);
        let _ = out.flush();
        r
    });
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { EXIT_INPUT } else { EXIT_INTERNAL })
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
