use std::io::{self, Write};
use std::process;

use clap::Parser;
use taskscope::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    let code = run(cli, &mut out, &mut io::stderr());
    if out.flush().is_err() && code == 0 {
        process::exit(2);
    }
    process::exit(code);
}
