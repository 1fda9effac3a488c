//! Builds covariate layers: temporal composites and PCA of an index time
//! series, GLCM textures of a backscatter band, DEM slope and roughness, and
//! aggregation to a coarser grid.
//!
//! cargo run --release --example raster_covariates

use agbmap::raster::{
    dem_derivatives, glcm_textures, pca_stack, resample, temporal_composites, Aggregation, Grid, GridStack,
};
use agbmap::synth::smooth_field;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> agbmap::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (nr, nc, cs) = (64, 64, 250.0);
    let grid = |v: Vec<f64>| Grid::from_values(nc, nr, 0.0, 0.0, cs, -9999.0, v);

    // Twelve dates sharing a common spatial pattern plus date-specific noise.
    let base = smooth_field(nr, nc, cs, 3000.0, &mut rng)?;
    let mut series = GridStack::new();
    for t in 0..12 {
        let wobble = smooth_field(nr, nc, cs, 1500.0, &mut rng)?;
        let season = 0.1 * (t as f64 * std::f64::consts::PI / 6.0).sin();
        let v = base.iter().zip(&wobble).map(|(b, w)| 0.6 + 0.1 * b + 0.02 * w + season).collect();
        series.push(format!("evi_{t:02}"), grid(v)?)?;
    }
    let comp = temporal_composites(&series)?;
    println!("composites: {:?}", comp.names());
    let pca = pca_stack(&series, 3)?;
    let total: f64 = pca.eigenvalues.iter().sum();
    for (k, ev) in pca.eigenvalues.iter().take(3).enumerate() {
        println!("PC{} explains {:.1}%", k + 1, 100.0 * ev / total);
    }

    let backscatter = grid(smooth_field(nr, nc, cs, 1000.0, &mut rng)?)?;
    let tex = glcm_textures(&backscatter, 3, 32)?;
    for (name, g) in tex.bands() {
        println!("texture {name:<14} mean {:.4}", g.mean().unwrap_or(f64::NAN));
    }

    let dem = grid(smooth_field(nr, nc, cs, 4000.0, &mut rng)?.into_iter().map(|z| 120.0 + 60.0 * z).collect())?;
    let d = dem_derivatives(&dem)?;
    println!("slope mean {:.2} deg, roughness mean {:.2} m", d.slope.mean().unwrap(), d.roughness.mean().unwrap());

    let coarse = resample(&pca.components.band(0).clone(), 4, Aggregation::Mean)?;
    println!("PC1 resampled to {} m: {} x {}", coarse.cellsize(), coarse.nrows(), coarse.ncols());
    Ok(())
}
