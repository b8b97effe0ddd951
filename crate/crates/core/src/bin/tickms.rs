fn main() {
    std::process::exit(tickms::cli::run(std::env::args_os()));
}
