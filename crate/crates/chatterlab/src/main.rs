fn main() {
    std::process::exit(chatterlab::cli::run());
}
