fn main() {
    std::process::exit(claimlock::cli::run(std::env::args_os()));
}
