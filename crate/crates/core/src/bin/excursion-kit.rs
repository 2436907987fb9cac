fn main() {
    std::process::exit(excursion_kit::cli::main_with_args(std::env::args_os()));
}
