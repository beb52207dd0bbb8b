use clap::Parser;
use transeval_cli::{run, Cli};

fn main() {
    // TRANSEVAL_THREADS caps the worker pool; outputs are ordered by
    // manifest order regardless of scheduling.
    if let Ok(threads) = std::env::var("TRANSEVAL_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: config: TRANSEVAL_THREADS must be a positive integer");
                std::process::exit(2);
            }
        }
    }
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
