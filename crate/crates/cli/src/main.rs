fn main() {
    std::process::exit(herdopt_cli::cli_main(std::env::args_os()));
}
