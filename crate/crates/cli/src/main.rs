fn main() {
    std::process::exit(integrity_kit::run(std::env::args_os()));
}
