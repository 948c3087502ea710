fn main() {
    std::process::exit(cran_ua::cli::main_with_args(std::env::args_os()));
}
