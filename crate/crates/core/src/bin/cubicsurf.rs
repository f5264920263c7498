fn main() {
    std::process::exit(cubic_surfaces::cli::main_with_args(std::env::args_os()));
}
