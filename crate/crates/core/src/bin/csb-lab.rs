fn main() {
    std::process::exit(csb::cli::run_from(std::env::args_os()));
}
