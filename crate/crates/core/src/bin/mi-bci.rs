fn main() {
    std::process::exit(mi_bci::cli::main());
}
