fn main() {
    std::process::exit(kmip::cli::run(std::env::args_os()));
}
