fn main() {
    std::process::exit(ptforge::cli::run(std::env::args_os()));
}
