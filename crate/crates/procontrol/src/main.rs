fn main() {
    std::process::exit(procontrol::harness::cli_main());
}
