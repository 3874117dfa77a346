use std::io::{self, Write};

fn main() -> anyhow::Result<()> {
    let code = {
        let stdout = io::stdout();
        let stderr = io::stderr();
        let (mut out, mut err) = (stdout.lock(), stderr.lock());
        let code = gausscomp::cli::run_from(std::env::args_os(), &mut out, &mut err);
        out.flush()?;
        code
    };
    std::process::exit(code)
}
