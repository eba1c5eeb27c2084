fn main() {
    std::process::exit(jamgame::cli::main_with_args(std::env::args_os()));
}
