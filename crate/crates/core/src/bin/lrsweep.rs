fn main() {
    std::process::exit(lrsweep::cli::run(std::env::args_os()));
}
