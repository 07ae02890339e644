fn main() {
    std::process::exit(tidsit::cli::run_from(std::env::args_os()));
}
