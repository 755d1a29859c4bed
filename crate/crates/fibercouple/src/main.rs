use std::process::ExitCode;

use fibercouple::cli::Help;

fn main() -> ExitCode {
    match fibercouple::run(std::env::args_os()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let Some(h) = e.downcast_ref::<Help>() {
                print!("{h}");
                return ExitCode::SUCCESS;
            }
            // one line, so scripts can grep for it
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
