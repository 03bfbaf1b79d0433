use clap::Parser;

fn main() {
    if let Err(e) = seqdec_cli::run(seqdec_cli::Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
