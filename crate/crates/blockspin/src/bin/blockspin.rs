use clap::Parser;

fn main() {
    let args = blockspin::cli::Args::parse();
    std::process::exit(blockspin::cli::run(args));
}
