fn main() {
    std::process::exit(otclean::cli::run(std::env::args_os()));
}
