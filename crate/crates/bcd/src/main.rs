use clap::Parser;

fn main() {
    let cli = bcd::cli::Cli::parse();
    std::process::exit(bcd::cli::run(cli));
}
