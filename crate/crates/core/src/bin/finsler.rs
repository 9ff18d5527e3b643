use clap::Parser;
use finsler_core::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
