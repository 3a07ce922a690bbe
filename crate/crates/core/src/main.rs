fn main() {
    std::process::exit(volterra::cli::run(std::env::args_os()));
}
