fn main() {
    std::process::exit(cilab::cli::run(std::env::args_os()));
}
