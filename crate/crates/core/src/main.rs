fn main() {
    std::process::exit(sdld::cli::run_command(std::env::args_os()));
}
