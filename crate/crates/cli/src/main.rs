use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match crcm_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage errors exit 2; --help and --version exit 0
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match crcm_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
