use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = refer_core::cli::run(std::env::args().skip(1));
    ExitCode::from(code as u8)
}
