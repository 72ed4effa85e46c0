fn main() {
    std::process::exit(acnlab::run(std::env::args_os()));
}
