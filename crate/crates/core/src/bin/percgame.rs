fn main() {
    std::process::exit(percgame::cli::main_entry());
}
