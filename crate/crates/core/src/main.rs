fn main() {
    std::process::exit(fedsq::cli::main_with_args(std::env::args_os()));
}
