fn main() {
    std::process::exit(banditq::cli::main_with_args(std::env::args_os()));
}
