fn main() {
    std::process::exit(maskcons::cli::run(std::env::args_os()));
}
