use clap::Parser;
use smrac::cli::{execute, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SMRAC_LOG", "warn")).init();
    std::process::exit(execute(Cli::parse()));
}
