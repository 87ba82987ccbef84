use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(ris_uplink::driver::cli_main(std::env::args().skip(1)) as u8)
}
