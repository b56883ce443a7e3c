fn main() {
    std::process::exit(dml4ssi::cli::run(std::env::args_os()));
}
