fn main() {
    std::process::exit(qbm::cli::run(std::env::args_os()));
}
