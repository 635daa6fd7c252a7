//! Draws a warped two-class mixture, checks its analytic posterior and writes it as CSV.
//!
//! ```bash
//! cargo run --release -p uqbench --example simulate_tcc -- [out.csv]
//! ```

use uqbench::simulator::{eval_grid, simulate, true_prob, TccConfig, WarpSpec};

fn main() -> uqbench::Result<()> {
    let cfg = TccConfig { seed: 7, ..TccConfig::default() };
    let data = simulate(&cfg, 1000)?;
    let positives = data.labels.iter().filter(|&&y| y == 1).count();
    println!("{} points, {} labelled 1", data.len(), positives);

    // The warp moves points but not their class posterior.
    let latent = [0.4, -0.3];
    let plain = TccConfig { warp: WarpSpec::identity(), ..cfg.clone() };
    println!(
        "P(Y=1) at latent {:?}: {:.12} (identity warp) vs {:.12} (warped point)",
        latent,
        true_prob(&plain, latent)?,
        true_prob(&cfg, cfg.warp.forward(latent))?
    );

    let (pts, probs) = eval_grid(&cfg, &[[-3.0, 3.0], [-3.0, 3.0]], 7)?;
    println!("true P(Y=1) on a 7x7 grid over [-3, 3]^2 (rows: x2 ascending):");
    for row in probs.chunks(7) {
        println!("  {}", row.iter().map(|p| format!("{p:5.2}")).collect::<Vec<_>>().join(" "));
    }
    assert_eq!(pts.len(), 49);

    let out = std::env::args().nth(1).unwrap_or_else(|| "tcc_sample.csv".into());
    data.write_csv(out.as_ref())?;
    println!("wrote {out}");
    Ok(())
}
