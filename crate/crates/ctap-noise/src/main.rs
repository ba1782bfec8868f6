use std::process::ExitCode;

fn main() -> ExitCode {
    ctap_noise::cli::run()
}
