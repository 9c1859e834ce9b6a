use clap::Parser;

fn main() {
    let args = wqed::cli::Args::parse();
    std::process::exit(wqed::cli::execute(&args));
}
