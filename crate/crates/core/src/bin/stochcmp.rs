fn main() {
    std::process::exit(stochcmp::cli::run(std::env::args_os()));
}
