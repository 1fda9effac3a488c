//! Writes a synthetic scene to disk and runs the whole chain from its run
//! configuration, as the `simulate` and `map` commands do.
//!
//! cargo run --release --example full_pipeline [output-dir]
//!
//! The output directory defaults to `agbmap_scene_example` under the system
//! temporary directory.

use agbmap::pipeline::{run_pipeline, RunConfig, MANIFEST};
use agbmap::synth::{files, generate_scene, SceneConfig};

fn main() -> agbmap::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("agbmap_scene_example"));
    let mut cfg = SceneConfig::with_seed(21);
    cfg.n_footprints = 1500;
    let scene = generate_scene(&cfg)?;
    scene.write(&dir)?;

    let run = RunConfig::load(dir.join(files::RUN_CONFIG))?;
    let out = run_pipeline(&run)?;
    println!("{} of {} footprints kept", out.kept.len(), out.footprints.len());
    for row in &out.sweep {
        println!("pairing {:>4} m: {:>3} pairs, CV R2 {:.2}", row.max_dist, row.n_pairs, row.r2);
    }
    for m in &out.maps {
        let p = &m.product;
        let truth = scene.truth_rmse(&p.agb)?;
        match &m.validation {
            Some(v) => println!(
                "{:>5} m: RMSE vs truth {truth:.1}, plot RMSEP {:.1} (R2 {:.2}, {} cells), {:.0} kt C",
                p.grid_size, v.rmsep, v.r2, v.n_cells, m.carbon.total_ktc
            ),
            None => println!("{:>5} m: RMSE vs truth {truth:.1}, no validation cell, {:.0} kt C", p.grid_size, m.carbon.total_ktc),
        }
    }
    println!("products in {}, manifest {}", run.output_path().display(), MANIFEST);
    Ok(())
}
