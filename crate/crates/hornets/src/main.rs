fn main() {
    std::process::exit(hornets::cli::run(std::env::args_os()));
}
