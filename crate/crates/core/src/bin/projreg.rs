fn main() {
    std::process::exit(projreg::cli::main_with_args(std::env::args_os()));
}
