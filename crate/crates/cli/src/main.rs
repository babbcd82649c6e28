fn main() {
    std::process::exit(smod_cli::cli_dispatch(std::env::args_os()));
}
