fn main() {
    std::process::exit(wiedlab_cli::main_with_args(std::env::args_os()));
}
