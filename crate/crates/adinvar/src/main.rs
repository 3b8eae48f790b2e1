fn main() {
    std::process::exit(adinvar::cli::main());
}
