//! Runs a replicated study from a config file and writes summary.json, tables and grids.
//!
//! ```bash
//! cargo run --release -p uqbench --example study -- crates/core/configs/smoke.toml [out_dir]
//! ```

use uqbench::harness::{execute, render_table, StudyConfig};

fn main() -> uqbench::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = match args.next() {
        Some(path) => StudyConfig::load(path.as_ref())?,
        None => StudyConfig::default(),
    };
    if let Some(out) = args.next() {
        cfg.study.output_dir = out.into();
    }
    let run = execute(&cfg)?;
    print!("{}", render_table(&run.summary));
    for (method, t) in &run.summary.runtime {
        println!("{method:<14} {:>8.1} s", t.total_seconds);
    }
    println!("outputs in {}", cfg.study.output_dir.display());
    Ok(())
}
