fn main() {
    std::process::exit(gslim_cli::main_with_args(std::env::args_os()));
}
