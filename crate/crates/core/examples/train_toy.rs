//! Trains the toy detector on synthetic scenes, then reports held-out AP.
//! Arguments are `--key value` settings as for the command-line tool.
//!
//! `cargo run --release --example train_toy -- --steps 100 --head merge`

use anchorfree3d::pipeline::{parse_args, train_toy, RunConfig};

fn main() -> anchorfree3d::Result<()> {
    let mut args = vec!["train-toy".to_string()];
    args.extend(std::env::args().skip(1));
    let inv = parse_args(&args)?;
    let cfg = RunConfig::load(inv.config.as_deref(), &inv.overrides)?;
    println!("{}", cfg.summary());
    let result = train_toy(&cfg, &mut |line| println!("{line}"))?;
    print!("{}", result.val_report.to_table());
    Ok(())
}
