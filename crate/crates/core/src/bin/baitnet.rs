fn main() {
    std::process::exit(baitnet::cli::run_cli(std::env::args_os()));
}
