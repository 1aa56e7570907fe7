use clap::Parser;

fn main() {
    let cli = icae_cli::Cli::parse();
    if let Err(e) = icae_cli::run(cli) {
        eprintln!("{}", icae_cli::error_line(&e));
        std::process::exit(icae_cli::exit_code(&e));
    }
}
