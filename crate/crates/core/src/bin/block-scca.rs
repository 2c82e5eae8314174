fn main() {
    std::process::exit(block_scca::cli::main());
}
