use clap::Parser;
use uphill::cli::{execute, Args};

fn main() {
    let args = Args::parse();
    std::process::exit(execute(&args));
}
