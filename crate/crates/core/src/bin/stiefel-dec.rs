fn main() {
    std::process::exit(stiefel_dec::harness::cli::main_with_args(std::env::args_os()));
}
