fn main() {
    std::process::exit(hybrid_anomaly_cli::run(std::env::args_os()));
}
