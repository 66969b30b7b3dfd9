fn main() {
    std::process::exit(selm::cli::main());
}
