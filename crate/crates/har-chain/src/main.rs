fn main() {
    std::process::exit(har_chain::cli::run());
}
