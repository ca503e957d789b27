fn main() {
    std::process::exit(fracharm_harness::cli::main_with_args(std::env::args_os()));
}
