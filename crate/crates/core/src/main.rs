use clap::Parser;
use halsx::cli::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(status) => std::process::exit(status.code()),
        Err(e) => {
            eprintln!("halsx: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
