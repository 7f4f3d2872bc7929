fn main() {
    std::process::exit(balance_kit_cli::run(std::env::args_os()));
}
