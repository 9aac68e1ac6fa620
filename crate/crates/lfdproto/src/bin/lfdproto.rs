use clap::Parser;

fn main() {
    let cli = lfdproto::cli::Cli::parse();
    if let Err(e) = lfdproto::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
