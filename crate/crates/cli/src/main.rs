use clap::Parser;
use fairshift_cli::{execute, Cli, Outcome};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(Outcome::RunDir(dir)) => println!("{}", dir.display()),
        Ok(Outcome::Text(t)) => println!("{t}"),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
