fn main() {
    std::process::exit(wcur::cli::run_command(std::env::args()));
}
