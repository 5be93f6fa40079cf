fn main() {
    std::process::exit(indefinite::cli::run(std::env::args_os()));
}
