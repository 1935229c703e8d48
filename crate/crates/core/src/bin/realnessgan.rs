fn main() {
    std::process::exit(realnessgan::harness::run_cli(std::env::args_os()));
}
