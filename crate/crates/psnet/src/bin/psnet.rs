fn main() {
    std::process::exit(psnet::cli::run());
}
