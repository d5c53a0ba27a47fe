fn main() {
    std::process::exit(bcfw_cli::run(std::env::args_os()));
}
