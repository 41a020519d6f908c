fn main() {
    std::process::exit(vbatt_core::cli::main(std::env::args_os()));
}
