fn main() {
    std::process::exit(ftcs_cli::run(std::env::args_os()));
}
