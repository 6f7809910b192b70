fn main() {
    std::process::exit(loyal_match::cli::main_with_args(std::env::args_os()));
}
