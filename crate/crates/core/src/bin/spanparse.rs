fn main() {
    std::process::exit(spanparse::cli::main());
}
