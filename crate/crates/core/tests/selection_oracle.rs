use ctdenoise::ga::{ga_select, GaParams};
use ctdenoise::ghm::build_ghm_matrix;
use ctdenoise::grid::{all_windows, GridGeometry};
use ctdenoise::image::GrayImage;
use ctdenoise::select::{exhaustive_select, SelectionParams, WindowBank};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_setup(seed: u64) -> (GrayImage, WindowBank) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = [8, 12, 16][rng.random_range(0..3)];
    let w = rng.random_range(m..m * 4);
    let h = rng.random_range(m..m * 4);
    let s = rng.random_range(m / 2..=m);
    let img = GrayImage::from_fn(w, h, |_, _| rng.random());
    let g = GridGeometry::new(w, h, m, s).unwrap();
    let bank = WindowBank::build(&img, &g, &build_ghm_matrix(m).unwrap()).unwrap();
    (img, bank)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Transform-domain selection agrees with a pixel-domain full sort.
    #[test]
    fn exhaustive_matches_pixel_domain_sort(seed in any::<u64>(), n_c in 1usize..12, include_self in any::<bool>()) {
        let (img, bank) = random_setup(seed);
        let windows = all_windows(&img, bank.geometry()).unwrap();
        let p = SelectionParams::new(n_c, f64::INFINITY, include_self).unwrap();
        for r in 0..bank.len() {
            let mut oracle: Vec<(usize, f64)> = windows
                .iter()
                .enumerate()
                .filter(|(j, _)| include_self || *j != r)
                .map(|(j, w)| {
                    let d2: f64 = windows[r].values.iter().zip(w.values.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    (j, d2.sqrt())
                })
                .collect();
            oracle.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            oracle.truncate(n_c);
            let got = exhaustive_select(r, &bank, &p).unwrap();
            prop_assert_eq!(got.members.len(), oracle.len());
            for (n, (j, d)) in got.members.iter().zip(&oracle) {
                prop_assert!((n.distance - d).abs() <= 1e-9 * d.max(1.0));
                // random 8-bit content has no near-ties at this precision
                prop_assert_eq!(n.index, *j);
            }
        }
    }

    /// The GA never beats the exhaustive optimum and never reports a
    /// distance that differs from the true one.
    #[test]
    fn ga_is_bounded_by_the_oracle(seed in any::<u64>(), ga_seed in any::<u64>()) {
        let (_, bank) = random_setup(seed);
        let n_c = 4.min(bank.len());
        prop_assume!(n_c >= 2);
        let p = GaParams { l2_t: f64::INFINITY, seed: ga_seed, g_max: 10, ..GaParams::with_gene_length(n_c) };
        let sel = SelectionParams::new(n_c, f64::INFINITY, true).unwrap();
        for r in 0..bank.len() {
            let exact = exhaustive_select(r, &bank, &sel).unwrap();
            let ga = ga_select(r, &bank, &p).unwrap();
            prop_assert_eq!(ga.set.members.len(), n_c);
            prop_assert!(ga.set.mean_distance() >= exact.mean_distance() - 1e-9);
            for n in &ga.set.members {
                let d = ctdenoise::select::l2_distance(&bank.windows()[r], &bank.windows()[n.index]).unwrap();
                prop_assert_eq!(n.distance, d);
            }
            prop_assert!(ga.set.evaluations <= bank.len());
        }
    }
}
