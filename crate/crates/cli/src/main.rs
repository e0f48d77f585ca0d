use tracing_subscriber::EnvFilter;

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = counterspeech_cli::main_with_args(std::env::args()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
