fn main() {
    std::process::exit(prelayernorm::cli::main_with_args(std::env::args_os()));
}
