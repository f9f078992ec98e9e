use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = autograde::cli::Cli::parse();
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = autograde::cli::run(cli, &mut stdout) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
