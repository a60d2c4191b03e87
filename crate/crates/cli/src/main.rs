fn main() {
    std::process::exit(battleship_cli::main_with_args(std::env::args_os()));
}
