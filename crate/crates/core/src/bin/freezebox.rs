fn main() {
    std::process::exit(freezebox::cli::main_with_args(std::env::args_os()));
}
