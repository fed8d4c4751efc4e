fn main() {
    std::process::exit(quadbal::cli::run_from_args(std::env::args_os()));
}
