fn main() {
    std::process::exit(spa_control::cli::main_from_args(std::env::args_os()));
}
