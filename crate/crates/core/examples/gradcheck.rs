//! Finite-difference check of every differentiable op on the tape.

use dysaug::autograd::{gradcheck_suite, GRAD_TOLERANCE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let checks = gradcheck_suite(0)?;
    for c in &checks {
        println!(
            "{:24} probes {:3}  max rel error {:.2e}  {}",
            c.name,
            c.probes,
            c.max_rel_error,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} ops, {failed} above {GRAD_TOLERANCE:e}", checks.len());
    Ok(())
}
