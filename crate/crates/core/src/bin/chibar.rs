fn main() {
    std::process::exit(chibar::cli::main_with(std::env::args_os()));
}
