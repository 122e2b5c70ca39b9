fn main() {
    std::process::exit(ttplab::cli::main_with_args(std::env::args_os()));
}
