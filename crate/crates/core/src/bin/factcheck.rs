fn main() {
    std::process::exit(factcheck::cli::run(std::env::args_os()));
}
