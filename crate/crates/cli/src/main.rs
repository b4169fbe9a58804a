fn main() {
    std::process::exit(heliocot_cli::run(std::env::args_os()));
}
