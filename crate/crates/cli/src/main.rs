use clap::Parser;
use specfield_cli::reports::ErrorRecord;
use specfield_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => std::process::exit(0),
        Ok(false) => {
            eprintln!("suite failed");
            std::process::exit(1);
        }
        Err(err) => {
            let record = ErrorRecord::from_anyhow(&err);
            eprintln!(
                "{}",
                serde_json::to_string(&record).unwrap_or_else(|_| err.to_string())
            );
            std::process::exit(2);
        }
    }
}
