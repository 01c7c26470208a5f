fn main() {
    std::process::exit(phonem_cli::run(std::env::args_os()));
}
