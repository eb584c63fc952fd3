fn main() {
    std::process::exit(eqdiv::cli::run(std::env::args_os()));
}
