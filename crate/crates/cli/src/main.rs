fn main() {
    std::process::exit(ttstar_cli::run(std::env::args_os()).code);
}
