fn main() {
    std::process::exit(tpbft::cli::main_with(std::env::args_os()));
}
