fn main() {
    std::process::exit(nonlocal_homog::cli::main_with_args(std::env::args_os()));
}
