fn main() {
    std::process::exit(embedbound_cli::run(std::env::args_os()));
}
