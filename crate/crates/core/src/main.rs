fn main() {
    std::process::exit(dtcbf::cli::main_with_args(std::env::args_os()));
}
