use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = prompt_stability::cli::Cli::parse();
    match prompt_stability::cli::run(cli) {
        Ok(code) => std::process::ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("pss: error: {err:#}");
            std::process::ExitCode::from(1)
        }
    }
}
