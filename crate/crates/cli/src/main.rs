fn main() {
    std::process::exit(histo_adapt_cli::run(std::env::args_os()));
}
