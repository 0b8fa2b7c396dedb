fn main() {
    std::process::exit(lorapar_cli::run_cli(std::env::args_os()));
}
