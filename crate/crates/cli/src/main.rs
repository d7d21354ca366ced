fn main() {
    std::process::exit(kac_cli::main_with_args(std::env::args_os()));
}
