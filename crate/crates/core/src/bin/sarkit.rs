fn main() {
    std::process::exit(sarkit::cli::main_with_args(std::env::args_os()));
}
