//! Exports prediction and interval-width grids for one replicate and compares how
//! interval widths grow away from the training data.
//!
//! ```bash
//! cargo run --release -p uqbench --example grid_fan_out -- [config.toml]
//! ```

use uqbench::harness::{export_grids, prepare_output_dir, write_grids, StudyConfig};
use uqbench::MethodTag;

fn main() -> uqbench::Result<()> {
    let mut cfg = match std::env::args().nth(1) {
        Some(path) => StudyConfig::load(path.as_ref())?,
        None => StudyConfig::default(),
    };
    if std::env::args().nth(1).is_none() {
        cfg.study.methods = vec![MethodTag::BnnMcmc, MethodTag::DeepEnsemble, MethodTag::McDropout];
        cfg.ensemble.members = 20;
        cfg.study.grid_resolution = 60;
    }
    prepare_output_dir(&cfg.study.output_dir)?;
    let grids = export_grids(&cfg, 0)?;
    write_grids(&cfg.study.output_dir, &grids)?;
    println!("training centroid ({:.2}, {:.2})", grids.centroid[0], grids.centroid[1]);
    println!("{:<14} {:>12} {:>12}", "method", "width <3", "width >3");
    for s in &grids.surfaces {
        let far = s.mean_width_beyond(&grids.points, grids.centroid, 3.0).unwrap_or(f64::NAN);
        let all = s.interval_width.iter().sum::<f64>() / s.interval_width.len() as f64;
        let n_far = grids
            .points
            .iter()
            .filter(|p| ((p[0] - grids.centroid[0]).powi(2) + (p[1] - grids.centroid[1]).powi(2)).sqrt() > 3.0)
            .count() as f64;
        let n = grids.points.len() as f64;
        let near = (all * n - far * n_far) / (n - n_far);
        println!("{:<14} {:>12.4} {:>12.4}", s.method.as_str(), near, far);
    }
    println!("grids written to {}", cfg.study.output_dir.join("grids").display());
    Ok(())
}
