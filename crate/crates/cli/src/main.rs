use clap::Parser;
use gcnx_cli::Cli;

fn main() {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = gcnx_cli::configure_threads().and_then(|()| gcnx_cli::run(&cli));
    match result {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
