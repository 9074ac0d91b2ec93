fn main() {
    std::process::exit(fdrcurve::cli::run_from(std::env::args_os()));
}
