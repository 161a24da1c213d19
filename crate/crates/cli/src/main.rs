fn main() {
    std::process::exit(sphereqp_cli::run_from(std::env::args_os()));
}
