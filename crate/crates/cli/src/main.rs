use clap::Parser;

fn main() {
    let cli = pcg_cli::Cli::parse();
    if let Err(e) = pcg_cli::run(&cli) {
        eprintln!("pcg: {e}");
        std::process::exit(e.exit_code());
    }
}
