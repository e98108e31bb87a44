use clap::Parser;

fn main() {
    let args = plap_core::cli::Args::parse();
    std::process::exit(plap_core::cli::execute(&args));
}
