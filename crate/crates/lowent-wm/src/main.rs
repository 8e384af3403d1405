fn main() {
    std::process::exit(lowent_wm::cli::run());
}
