use clap::Parser;

fn main() {
    let cli = kinchain_cli::Cli::parse();
    if let Err(e) = kinchain_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
