fn main() {
    std::process::exit(cect_cli::run(std::env::args_os()));
}
