//! Compares test WER on the synthetic dysarthric speakers with and without
//! GAN-based augmentation. Pass a TOML file to override the defaults.

use dysaug::experiment::{run_utility, UtilityConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg: UtilityConfig = match std::env::args().nth(1) {
        Some(path) => toml::from_str(&std::fs::read_to_string(path)?)?,
        None => UtilityConfig::default(),
    };
    let t0 = std::time::Instant::now();
    let report = run_utility(&cfg, |line| println!("{line}"))?;
    println!("\n{}", report.table_csv);
    for (system, w) in &report.mean_wer {
        println!("mean WER {system:<8} {w:6.2}%");
    }
    println!("elapsed {:.1?}", t0.elapsed());
    Ok(())
}
