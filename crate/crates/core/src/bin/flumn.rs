fn main() {
    std::process::exit(flumn::cli::main_with_args(std::env::args_os()));
}
