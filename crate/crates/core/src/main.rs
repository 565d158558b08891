fn main() {
    std::process::exit(xraycot::cli::run(std::env::args_os()));
}
