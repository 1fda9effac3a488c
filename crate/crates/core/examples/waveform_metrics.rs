//! Screens synthetic waveforms and compares the extracted canopy height with
//! the planted one.
//!
//! cargo run --release --example waveform_metrics

use agbmap::synth::{generate_scene, SceneConfig};
use agbmap::waveform::{process_waveforms, FilterDecision, WaveformConfig};

fn main() -> agbmap::Result<()> {
    let mut cfg = SceneConfig::with_seed(3);
    cfg.extent_x = 10_000.0;
    cfg.extent_y = 10_000.0;
    cfg.n_footprints = 40;
    cfg.n_plots = 0;
    cfg.waveform.violation_rate = 0.2;
    let scene = generate_scene(&cfg)?;

    let results = process_waveforms(&scene.waveforms, Some(&scene.dem), &WaveformConfig::default());
    println!("{:<10} {:>7} {:>9} {:>9} {:>7} {:>3}", "id", "snr", "planted", "tch", "wext", "nc");
    for (r, truth) in results.iter().zip(&scene.footprint_truth) {
        let snr = r.snr.unwrap_or(f64::NAN);
        match (&r.decision, &r.metrics) {
            (FilterDecision::Keep, Some(m)) => println!(
                "{:<10} {:>7.1} {:>9.2} {:>9.2} {:>7.2} {:>3}",
                r.id, snr, truth.canopy_height, m.tch, m.wext, r.n_components
            ),
            (FilterDecision::Reject(why), _) => {
                println!("{:<10} {:>7.1} {:>9.2}   rejected: {why:?} (planted {:?})", r.id, snr, truth.canopy_height, truth.violation)
            }
            (FilterDecision::Keep, None) => println!("{:<10} kept but no metrics", r.id),
        }
    }
    Ok(())
}
