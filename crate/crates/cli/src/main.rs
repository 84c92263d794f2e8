fn main() {
    std::process::exit(gaitkit_cli::run_from(std::env::args_os()));
}
