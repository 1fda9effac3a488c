//! Property-based checks of invariants that hold for any valid input.

use proptest::prelude::*;

use agbmap::allometry::{carbon_stock, tree_agb, CarbonConvention, TreeRecord};
use agbmap::geostat::{empirical_variogram, Kriger, SampleSet, VariogramModel};
use agbmap::raster::{pca_stack, Glcm, Grid, GridStack};
use agbmap::regression::{full_model, kfold_cv, stepwise_bic, DesignMatrix};
use agbmap::spatial::Point;
use agbmap::waveform::{detect_signal_bounds, energy_quantiles, WaveformRecord};

const ND: f64 = -9999.0;

fn waveform(intensities: Vec<f64>) -> WaveformRecord {
    WaveformRecord {
        id: "p".into(),
        lon: 0.0,
        lat: 0.0,
        bin_top_elev: 150.0,
        bin_size: 0.5,
        intensities,
        sat_ndx: 0,
        cloud_flag: 15,
        srtm_elev: 100.0,
        acquired_at: None,
    }
}

/// Background with a ripple (so the noise spread is nonzero) plus a canopy
/// and a ground return.
fn two_returns(n: usize, canopy: f64, ground: f64, amp: f64, ripple: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = i as f64;
            let g = 200.0 * (-0.5 * ((x - ground) / 3.0).powi(2)).exp();
            let c = amp * (-0.5 * ((x - canopy) / 8.0).powi(2)).exp();
            20.0 + ripple * ((i * 7919 % 13) as f64 - 6.0) / 6.0 + g + c
        })
        .collect()
}

fn sample_set(raw: &[(f64, f64, f64)]) -> SampleSet {
    SampleSet::new(raw.iter().map(|r| Point::new(r.0, r.1)).collect(), raw.iter().map(|r| r.2).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_agb_increases_in_every_argument(wsg in 0.2f64..1.2, dbh in 5.0f64..150.0, h in 2.0f64..70.0, f in 1.01f64..2.0) {
        let base = tree_agb(&TreeRecord::new(wsg, dbh, h).unwrap()).unwrap();
        prop_assert!(base > 0.0);
        prop_assert!(tree_agb(&TreeRecord::new(wsg * f, dbh, h).unwrap()).unwrap() > base);
        prop_assert!(tree_agb(&TreeRecord::new(wsg, dbh * f, h).unwrap()).unwrap() > base);
        prop_assert!(tree_agb(&TreeRecord::new(wsg, dbh, h * f).unwrap()).unwrap() > base);
    }

    #[test]
    fn carbon_is_additive_over_any_split(
        vals in proptest::collection::vec(prop_oneof![Just(ND), 0.0f64..800.0], 30),
        mask in proptest::collection::vec(any::<bool>(), 30),
    ) {
        let g = |v: Vec<f64>| Grid::from_values(6, 5, 0.0, 0.0, 500.0, ND, v).unwrap();
        let part = |keep: bool| g(vals.iter().zip(&mask).map(|(v, m)| if *m == keep { *v } else { ND }).collect());
        for conv in [CarbonConvention::CellArea, CarbonConvention::LiteralFactor] {
            let whole = carbon_stock(&g(vals.clone()), conv).unwrap().total_tc;
            let split = carbon_stock(&part(true), conv).unwrap().total_tc + carbon_stock(&part(false), conv).unwrap().total_tc;
            prop_assert!(whole >= 0.0);
            prop_assert!((whole - split).abs() <= 1e-9 * whole.max(1.0));
        }
    }

    #[test]
    fn kriging_weights_sum_to_one(
        raw in proptest::collection::vec((0.0f64..3000.0, 0.0f64..3000.0, 0.0f64..300.0), 3..40),
        nugget in 0.0f64..200.0, psill in 1.0f64..2000.0, range in 100.0f64..5000.0,
        k in 1usize..16, tx in -200.0f64..3200.0, ty in -200.0f64..3200.0,
    ) {
        let s = sample_set(&raw);
        let m = VariogramModel { nugget, psill, range };
        let e = Kriger::new(&s, m, k).unwrap().krige(Point::new(tx, ty)).unwrap();
        let sum: f64 = e.weights.iter().map(|(_, w)| w).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        prop_assert!(e.variance >= 0.0);
        prop_assert!(e.weights.len() <= k.min(s.len()));
    }

    #[test]
    fn variogram_counts_every_close_pair(
        raw in proptest::collection::vec((0.0f64..1000.0, 0.0f64..1000.0, -5.0f64..5.0), 2..60),
        width in 10.0f64..300.0, max_lag in 50.0f64..1500.0,
    ) {
        let s = sample_set(&raw);
        let p = s.points();
        let close = (0..p.len()).flat_map(|i| (i + 1..p.len()).map(move |j| (i, j))).filter(|&(i, j)| p[i].dist(&p[j]) < max_lag).count();
        match empirical_variogram(&s, width, max_lag) {
            Ok(ev) => {
                prop_assert_eq!(ev.bins.iter().map(|b| b.pairs).sum::<usize>(), close);
                prop_assert!(ev.bins.iter().all(|b| b.gamma >= 0.0 && b.lag < max_lag));
                prop_assert!(ev.bins.windows(2).all(|w| w[0].lag < w[1].lag));
            }
            Err(_) => prop_assert_eq!(close, 0),
        }
    }

    #[test]
    fn height_quantiles_are_ordered(canopy in 40.0f64..120.0, gap in 20.0f64..80.0, amp in 30.0f64..150.0) {
        let w = waveform(two_returns(300, canopy, canopy + gap, amp, 1.0));
        let b = detect_signal_bounds(&w, 4.5).unwrap();
        let h = energy_quantiles(&w, &b);
        prop_assert!(h.windows(2).all(|p| p[0] <= p[1]));
        prop_assert!(h[0] >= 0.0 && h[8] <= b.begin_elev - b.end_elev + w.bin_size);
    }

    #[test]
    fn signal_bounds_ignore_affine_rescaling(canopy in 40.0f64..120.0, gap in 20.0f64..80.0, a in 0.1f64..50.0, c in 0.0f64..500.0) {
        let y = two_returns(300, canopy, canopy + gap, 80.0, 2.0);
        let b0 = detect_signal_bounds(&waveform(y.clone()), 4.5).unwrap();
        let b1 = detect_signal_bounds(&waveform(y.iter().map(|v| a * v + c).collect()), 4.5).unwrap();
        prop_assert_eq!((b0.begin_bin, b0.end_bin), (b1.begin_bin, b1.end_bin));
    }

    #[test]
    fn texture_statistics_stay_in_range(cells in proptest::collection::vec(0usize..16, 9)) {
        let rows: Vec<Vec<Option<usize>>> = cells.chunks(3).map(|r| r.iter().map(|&v| Some(v)).collect()).collect();
        let s = Glcm::from_window(&rows, 16).unwrap().stats().as_array();
        let [mean, var, hom, con, dis, ent, asm, cor] = s;
        prop_assert!((0.0..=15.0).contains(&mean) && var >= 0.0);
        prop_assert!(hom > 0.0 && hom <= 1.0 + 1e-12);
        prop_assert!(con >= dis - 1e-12 && dis >= 0.0);
        prop_assert!(ent >= -1e-12 && asm > 0.0 && asm <= 1.0 + 1e-12);
        prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&cor));
    }

    #[test]
    fn pca_eigenvalues_descend(vals in proptest::collection::vec(-10.0f64..10.0, 3 * 40)) {
        let mut stack = GridStack::new();
        for (b, chunk) in vals.chunks(40).enumerate() {
            stack.push(format!("b{b}"), Grid::from_values(8, 5, 0.0, 0.0, 1.0, ND, chunk.to_vec()).unwrap()).unwrap();
        }
        let p = pca_stack(&stack, 3).unwrap();
        prop_assert!(p.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(p.eigenvalues.iter().all(|&e| e >= -1e-9));
    }

    #[test]
    fn stepwise_never_worse_than_full_model(
        x in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 40), 2..6),
        noise in proptest::collection::vec(-1.0f64..1.0, 40),
        beta in -3.0f64..3.0,
    ) {
        let y: Vec<f64> = (0..40).map(|i| beta * x[0][i] + noise[i]).collect();
        let mut d = DesignMatrix::new(y).unwrap();
        for (j, c) in x.iter().enumerate() {
            d.push_numeric(format!("x{j}"), c.clone()).unwrap();
        }
        let sw = stepwise_bic(&d).unwrap();
        prop_assert!(sw.bic <= full_model(&d).unwrap().bic);
        let cv = kfold_cv(&d, stepwise_bic, 5, 3).unwrap();
        prop_assert!(cv.r2 <= 1.0 && cv.rmse >= 0.0);
    }
}
