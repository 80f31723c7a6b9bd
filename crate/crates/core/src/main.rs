fn main() {
    std::process::exit(xxz_core::cli::run(std::env::args_os()));
}
