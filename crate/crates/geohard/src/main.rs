fn main() {
    std::process::exit(geohard::cli::run());
}
