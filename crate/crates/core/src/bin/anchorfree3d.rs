use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match anchorfree3d::pipeline::run(&args, &mut |line| println!("{line}")) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error={e}");
            ExitCode::FAILURE
        }
    }
}
