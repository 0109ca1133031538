use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = gridaudit::Cli::parse();
    let stdout = std::io::stdout();
    let code = gridaudit::run(&cli, &mut stdout.lock());
    ExitCode::from(code)
}
