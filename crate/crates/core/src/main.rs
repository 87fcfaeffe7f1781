fn main() {
    std::process::exit(netforecast::cli::run());
}
