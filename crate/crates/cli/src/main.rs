fn main() {
    std::process::exit(ldvqe_cli::run_from_args(std::env::args_os()));
}
