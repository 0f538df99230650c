use clap::Parser;

fn main() {
    let cli = bdg_cli::Cli::parse();
    if let Err(e) = bdg_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(bdg_cli::exit_code(&e));
    }
}
