fn main() {
    std::process::exit(detach_core::harness::cli::run(std::env::args_os()));
}
