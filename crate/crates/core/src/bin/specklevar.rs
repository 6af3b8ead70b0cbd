fn main() {
    std::process::exit(specklevar::cli::run(std::env::args_os()));
}
