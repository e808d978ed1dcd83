fn main() {
    std::process::exit(capbound::cli::main_from_env());
}
