fn main() {
    std::process::exit(ratesel::cli::run(std::env::args_os()));
}
