use clap::Parser;
use perturbed_sde::cli::{self, Cli};

fn main() {
    let cli = Cli::parse();
    std::process::exit(cli::run(&cli));
}
