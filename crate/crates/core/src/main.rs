fn main() {
    std::process::exit(dds_gate::cli::run_cli(std::env::args_os()));
}
