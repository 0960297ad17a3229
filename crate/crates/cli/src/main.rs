fn main() {
    std::process::exit(thinnet_cli::main_with_args(std::env::args_os()));
}
