use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use fastsubs_cli::{run, Cli, Failure};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // --help and --version also arrive here
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut diag = io::stderr();
    let result = run(&cli, &mut out, &mut diag).and_then(|()| out.flush().map_err(Failure::from));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            let _ = writeln!(diag, "fastsubs: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
