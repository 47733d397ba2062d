fn main() {
    std::process::exit(ope_lab::cli::run());
}
