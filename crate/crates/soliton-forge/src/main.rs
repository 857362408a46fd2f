use clap::Parser;

fn main() {
    let cli = soliton_forge::cli::Cli::parse();
    std::process::exit(soliton_forge::cli::run(&cli));
}
