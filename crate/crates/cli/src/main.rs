use clap::Parser;
use curvcrb_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("curvcrb: {e}");
        std::process::exit(e.exit_code());
    }
}
