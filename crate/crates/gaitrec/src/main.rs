fn main() {
    std::process::exit(gaitrec::cli::run_cli(std::env::args_os()));
}
