fn main() {
    std::process::exit(tempattn::cli::run(std::env::args_os()));
}
