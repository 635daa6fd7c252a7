//! Coverage, width, ECE, accuracy and the high-confidence set on small hand-checkable inputs.
//!
//! ```bash
//! cargo run --release -p uqbench --example metrics_tour
//! ```

use uqbench::metrics::{accuracy, calibration_bins, column_interval, coverage, ece, hcs, mean_width, CredibleInterval, EceVariant};

fn ci(lower: f64, upper: f64) -> CredibleInterval {
    CredibleInterval { lower, upper, level: 0.9 }
}

fn main() -> uqbench::Result<()> {
    let draws: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let q = column_interval(draws, 0.2)?;
    println!("80% interval of 0.1..1.0: [{:.2}, {:.2}]", q.lower, q.upper);

    let cis = [ci(0.2, 0.4), ci(0.6, 0.7), ci(0.9, 0.9)];
    println!("coverage of {{0.3, 0.5, 0.9}}: {:.4}", coverage(&cis, Some(&[0.3, 0.5, 0.9]))?);
    println!("mean width of [0.1,0.3],[0.5,0.9]: {:.2}", mean_width(&[ci(0.1, 0.3), ci(0.5, 0.9)])?);

    let conf = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9];
    let y = [0, 0, 1, 1, 1, 1];
    println!("ECE (2 bins): {:.4}", ece(&y, &conf, 2, EceVariant::PositiveFrequency)?);
    for b in calibration_bins(&y, &conf, 2)? {
        println!("  {b:?}");
    }
    println!("accuracy with a tie at 0.5: {:.2}", accuracy(&[0, 1, 0, 1], &[0.4, 0.6, 0.5, 0.2], 0.5)?);
    let (members, prop) = hcs(&[ci(0.85, 0.95), ci(0.1, 0.15), ci(0.3, 0.6)], 0.2)?;
    println!("high-confidence set: {members:?}, proportion {prop:.4}");
    Ok(())
}
