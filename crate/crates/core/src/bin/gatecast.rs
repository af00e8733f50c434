fn main() {
    std::process::exit(gatecast::cli::run(std::env::args_os()));
}
