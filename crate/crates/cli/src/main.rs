use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(foa_enhance_cli::main_with(std::env::args_os()))
}
