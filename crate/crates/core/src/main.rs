fn main() {
    std::process::exit(selig::cli::run(std::env::args_os()));
}
