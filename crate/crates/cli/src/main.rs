use clap::Parser;
use resonat_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(dir) => println!("wrote {}", dir.display()),
        Err(e) => {
            eprintln!("resonat: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
