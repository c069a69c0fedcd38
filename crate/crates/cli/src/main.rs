use clap::Parser;
use nhskin_cli::{run, Cli};

fn main() {
    match run(Cli::parse()) {
        Ok(s) => {
            for l in &s.lines {
                println!("{l}");
            }
            for f in &s.files {
                println!("wrote {}", f.display());
            }
            std::process::exit(s.exit_code);
        }
        Err(e) => {
            eprintln!("nhskin: {e}");
            std::process::exit(2);
        }
    }
}
