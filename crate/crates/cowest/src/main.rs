use clap::Parser;

fn main() {
    let cli = cowest::cli::Cli::parse();
    std::process::exit(cowest::cli::run(cli));
}
