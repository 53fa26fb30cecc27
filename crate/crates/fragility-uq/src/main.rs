use clap::Parser;
use fragility_uq::cli;

fn main() {
    // FRAGILITY_UQ_THREADS caps internal parallelism; results do not
    // depend on the thread count.
    if let Ok(threads) = std::env::var("FRAGILITY_UQ_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let args = cli::CliArgs::parse();
    std::process::exit(cli::run(args));
}
