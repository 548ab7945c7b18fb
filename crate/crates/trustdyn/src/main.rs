fn main() {
    std::process::exit(trustdyn::cli::run(std::env::args_os()));
}
