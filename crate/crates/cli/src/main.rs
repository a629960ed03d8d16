use clap::Parser;
use pigan_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("pigan: {e}");
        std::process::exit(e.exit_code());
    }
}
