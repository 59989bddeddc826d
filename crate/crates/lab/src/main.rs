fn main() {
    std::process::exit(birkhoff_lab::commands::main_with_args(std::env::args_os()));
}
