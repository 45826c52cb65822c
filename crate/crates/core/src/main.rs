fn main() {
    std::process::exit(herdalign::cli::main());
}
