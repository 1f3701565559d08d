fn main() {
    std::process::exit(textmanip::cli::run(std::env::args_os()));
}
