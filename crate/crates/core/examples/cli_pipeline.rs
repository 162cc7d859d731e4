//! Drives the command-line pipeline in-process: synthesize a dataset, run the
//! oracle head over it, and evaluate the detections.
//!
//! `cargo run --example cli_pipeline -- /tmp/af3d`

use anchorfree3d::pipeline::run;

fn main() -> anchorfree3d::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("af3d-demo").display().to_string());
    let data = format!("{dir}/data");
    let commands = [
        format!("synth --out {data} --scenes 6 --seed 11"),
        format!("infer --data {data} --oracle-head --out {dir}/oracle"),
        format!("eval --data {data} --detections {dir}/oracle/detections --out {dir}/oracle"),
    ];
    for c in &commands {
        let args: Vec<String> = c.split_whitespace().map(String::from).collect();
        run(&args, &mut |line| println!("{line}"))?;
    }
    Ok(())
}
