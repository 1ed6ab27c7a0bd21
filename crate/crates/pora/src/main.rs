fn main() {
    std::process::exit(pora::cli::run(std::env::args_os()));
}
