fn main() {
    std::process::exit(pyramid_count::cli::main_with_args(std::env::args_os()));
}
