fn main() {
    std::process::exit(chc_core::cli::run(std::env::args_os()));
}
