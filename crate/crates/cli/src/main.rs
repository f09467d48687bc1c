fn main() {
    std::process::exit(sbp_cli::run(std::env::args_os()));
}
