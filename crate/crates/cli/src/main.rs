use clap::Parser;
use oscr_cli::cli::{run, Cli};
use oscr_cli::error::EXIT_OK;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OSCR_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}", e.to_line());
            e.exit_code()
        }
    };
    std::process::exit(code);
}
