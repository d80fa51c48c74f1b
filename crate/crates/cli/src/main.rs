fn main() {
    std::process::exit(cachenet_cli::run(std::env::args_os()));
}
