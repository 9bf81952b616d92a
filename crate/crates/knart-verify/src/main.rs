fn main() {
    std::process::exit(knart_verify::cli::run(std::env::args().skip(1)));
}
