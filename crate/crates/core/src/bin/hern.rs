fn main() {
    std::process::exit(hern::cli::main_with_args(std::env::args_os()));
}
