fn main() {
    std::process::exit(odlae_cli::main_with(std::env::args_os().collect()));
}
