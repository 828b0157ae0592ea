use std::process::ExitCode;

fn main() -> ExitCode {
    let (mut out, mut err) = (std::io::stdout(), std::io::stderr());
    reqc_cli::run_with(std::env::args(), &mut out, &mut err).into()
}
