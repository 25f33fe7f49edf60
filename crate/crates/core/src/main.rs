fn main() {
    std::process::exit(twinline::cli::run(std::env::args_os()));
}
