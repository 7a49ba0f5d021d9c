fn main() {
    std::process::exit(cvmdi::driver::run_cli(std::env::args_os()));
}
