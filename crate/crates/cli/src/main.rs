use std::io::{self, Write};

fn main() {
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = io::BufWriter::new(stdout.lock());
    let mut err = stderr.lock();
    let code = jpp_cli::main_with(std::env::args_os(), &mut out, &mut err);
    if out.flush().is_err() && code == jpp_cli::EXIT_OK {
        std::process::exit(jpp_cli::EXIT_RUN);
    }
    std::process::exit(code);
}
