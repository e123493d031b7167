fn main() {
    std::process::exit(excon_cli::run(std::env::args_os()));
}
