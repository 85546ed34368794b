fn main() {
    std::process::exit(homprobe::cli::run(std::env::args_os()));
}
