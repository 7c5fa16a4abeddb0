fn main() {
    std::process::exit(snn_landscape::cli::run(std::env::args()));
}
