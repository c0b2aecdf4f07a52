fn main() {
    std::process::exit(sirlab::cli::run_command(std::env::args_os()));
}
