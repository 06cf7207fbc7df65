fn main() {
    std::process::exit(distilltrain::cli::run());
}
