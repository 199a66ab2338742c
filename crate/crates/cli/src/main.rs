fn main() {
    std::process::exit(ntklab_cli::commands::cli_main(std::env::args_os()));
}
