fn main() {
    std::process::exit(vibound::cli::main_with_args(std::env::args_os()));
}
