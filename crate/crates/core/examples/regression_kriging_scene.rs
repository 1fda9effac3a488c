//! Maps a synthetic scene at 1 km with a linear and a random-forest trend and
//! scores trend-only and regression-kriged maps against the known truth.
//!
//! cargo run --release --example regression_kriging_scene [seed]

use agbmap::pipeline::{build_map, calibration_pairs, fit_glas_agb_model, predict_footprints, MapSettings, TrendKind};
use agbmap::synth::{generate_scene, SceneConfig};
use agbmap::waveform::{kept_metrics, process_waveforms, WaveformConfig};

fn main() -> agbmap::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let scene = generate_scene(&SceneConfig::with_seed(seed))?;
    let kept = kept_metrics(&process_waveforms(&scene.waveforms, Some(&scene.dem), &WaveformConfig::default()));
    println!("{} of {} footprints kept", kept.len(), scene.waveforms.len());

    let pairs = calibration_pairs(&scene.plots, &kept, 250.0)?;
    let model = fit_glas_agb_model(&pairs)?;
    println!("{} pairs, footprint model on {:?}", pairs.len(), model.selected_features);
    let agb = predict_footprints(&model, &kept)?;

    for trend in [TrendKind::Lm, TrendKind::Rf] {
        let settings = MapSettings { trend, ..Default::default() };
        let m = build_map(&agb.samples, &scene.covariates, &scene.categorical, 1000.0, &settings, seed)?;
        let (rk, tr) = (scene.truth_rmse(&m.agb)?, scene.truth_rmse(&m.trend)?);
        println!(
            "{trend:?}: trend RMSE {tr:.1}, RK RMSE {rk:.1} ({:+.1}%), variogram {:?}",
            100.0 * (rk - tr) / tr,
            m.variogram
        );
    }
    Ok(())
}
