use std::io::Write;

fn main() {
    let (code, out) = pqmorph::cli::run(std::env::args_os());
    let _ = if code == 2 { std::io::stderr().write_all(out.as_bytes()) } else { std::io::stdout().write_all(out.as_bytes()) };
    std::process::exit(code);
}
