fn main() {
    std::process::exit(starscreen::cli::run(std::env::args_os()));
}
