fn main() {
    std::process::exit(staggerspill::cli::main_with_args(std::env::args_os()));
}
