fn main() {
    std::process::exit(blockpart::cli::run(std::env::args_os()));
}
