fn main() {
    std::process::exit(slbm::cli::main(std::env::args_os()));
}
