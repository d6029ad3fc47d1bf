use clap::Parser;
use widecl_cli::Cli;

fn main() {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = cli.execute(&mut stdout) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
