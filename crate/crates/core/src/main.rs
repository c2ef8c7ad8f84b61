fn main() {
    std::process::exit(weylhom::cli::main_with_args(std::env::args_os()));
}
