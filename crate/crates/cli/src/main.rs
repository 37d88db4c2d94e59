use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("PROXSAFE_LOG", "warn")).init();
    let cli = proxsafe_cli::Cli::parse();
    if let Err(e) = proxsafe_cli::run(cli) {
        eprintln!("proxsafe: {e}");
        std::process::exit(e.exit_code());
    }
}
