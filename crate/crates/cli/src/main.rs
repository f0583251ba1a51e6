use clap::Parser;

fn main() {
    let cli = cartogan::Cli::parse();
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = cartogan::run(cli, &mut stdout) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
