use clap::Parser;

fn main() {
    env_logger::init();
    let args = saddle_escape::cli::Args::parse();
    std::process::exit(saddle_escape::cli::main_with_args(args));
}
