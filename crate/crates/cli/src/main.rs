use clap::Parser;

fn main() {
    let cli = cpforecast::Cli::parse();
    if let Err(e) = cpforecast::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
