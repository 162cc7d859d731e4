//! Finite-difference check of every loss and layer.
//!
//! `cargo run --release --example gradcheck`

use anchorfree3d::pipeline::{run_gradcheck, GRADCHECK_INSTANCES, GRADCHECK_PER_INSTANCE, GRADCHECK_TOLERANCE};

fn main() -> anchorfree3d::Result<()> {
    let report = run_gradcheck(0, GRADCHECK_INSTANCES, GRADCHECK_PER_INSTANCE, GRADCHECK_TOLERANCE)?;
    print!("{}", report.to_table());
    println!("passed={}", report.passed());
    Ok(())
}
