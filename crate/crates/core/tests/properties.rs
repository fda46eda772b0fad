//! Property tests for the invariants of each module.

use num_complex::Complex64;
use proptest::prelude::*;

use cavity_spinwave::fit::{
    fit_reflectance_n, synthetic_observations, FitModel, FitOptions, FitProblem, FreeParam, Noise,
};
use cavity_spinwave::retrieval::{integrate_from, integrate_retrieval, ReadPulse, RetrievalOptions, ThreeLevelParams};
use cavity_spinwave::scan::{extract_splitting, scan_efficiency};
use cavity_spinwave::spectrum::{probe_grid, TwoLevelSystemParams};
use cavity_spinwave::stats::{
    cross_correlation, read_autocorrelation, reference_chain, simulate_detection_events, summarize,
    write_autocorrelation, DetectionModel, EfficiencyChain,
};
use cavity_spinwave::units::{coupling_g0, derive_cavity, CavityGeometry};
use cavity_spinwave::AngularFrequency;

fn mhz(x: f64) -> AngularFrequency {
    AngularFrequency::from_mhz(x)
}

fn three_level() -> impl Strategy<Value = (ThreeLevelParams, ReadPulse)> {
    (
        (1.0f64..40.0, 2.0f64..15.0, 0.5f64..6.0, 0.0f64..0.05),
        (-30.0f64..30.0, -30.0f64..30.0),
        (0.5f64..15.0, 0.1f64..0.5),
    )
        .prop_map(|((g, kappa, gamma, gamma_s), (dc, dr), (rabi, fwhm))| {
            (
                ThreeLevelParams {
                    g: mhz(g),
                    kappa: mhz(kappa),
                    gamma: mhz(gamma),
                    gamma_s: mhz(gamma_s),
                    delta_c: mhz(dc),
                    delta_r: mhz(dr),
                },
                ReadPulse::centered(mhz(rabi), fwhm),
            )
        })
}

fn efficiency_only() -> RetrievalOptions {
    RetrievalOptions::default().efficiency_only()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mhz_round_trip_is_identity(nu in -1e4f64..1e4) {
        let back = AngularFrequency::from_mhz(nu).mhz();
        prop_assert!((back - nu).abs() <= 1e-12 * nu.abs().max(1e-300));
    }

    #[test]
    fn derived_cavity_respects_bounds(r in 0.5f64..0.999, l in 0.0f64..0.4) {
        let geom = CavityGeometry { mirror_reflectivity: r, round_trip_loss: l, ..CavityGeometry::reference() };
        let d = derive_cavity(&geom).unwrap();
        prop_assert!(d.finesse > 0.0);
        prop_assert!(d.kappa.0 >= d.kappa0.0 && d.kappa0.0 > 0.0);
        prop_assert!(d.escape_efficiency > 0.0 && d.escape_efficiency <= 1.0);
    }

    #[test]
    fn splitting_is_invariant_under_rescaling(
        center in -5.0f64..5.0,
        half in 6.0f64..15.0,
        width in 1.5f64..4.0,
        ratio in 0.5f64..1.0,
        scale in 1e-6f64..1e6,
    ) {
        let axis = probe_grid(mhz(-30.0), mhz(30.0), 121);
        let row: Vec<f64> = axis
            .iter()
            .map(|x| {
                let x = x.mhz();
                (-(x - center + half).powi(2) / (2.0 * width * width)).exp()
                    + ratio * (-(x - center - half).powi(2) / (2.0 * width * width)).exp()
            })
            .collect();
        let scaled: Vec<f64> = row.iter().map(|v| v * scale).collect();
        let a = extract_splitting(&row, &axis).unwrap();
        let b = extract_splitting(&scaled, &axis).unwrap();
        prop_assert!((a.0 - b.0).abs() <= 1e-9 * a.0);
        prop_assert!(a.0 > 0.0);
    }

    #[test]
    fn simulated_records_are_consistent(
        mu in 0.001f64..0.1,
        chi in 0.0f64..1.0,
        write_eff in 0.05f64..1.0,
        dark in 0.0f64..1e-3,
        seed in any::<u64>(),
    ) {
        let model = DetectionModel {
            mean_excitations: mu,
            chi_true: chi,
            chain: reference_chain(),
            write_efficiency: write_eff,
            dark_count: dark,
            background_trials: None,
        };
        let rec = simulate_detection_events(&model, 20_000, seed).unwrap();
        prop_assert_eq!(&rec, &simulate_detection_events(&model, 20_000, seed).unwrap());
        prop_assert_eq!(rec.histogram.iter().flatten().sum::<u64>(), rec.trials);
        prop_assert!(rec.heralds() <= rec.trials && rec.read_events() <= rec.trials);
        prop_assert!(rec.p_wr() <= rec.p_w().min(rec.p_r()));
        for p in [rec.p_w(), rec.p_r(), rec.p_wr(), rec.p_b().value] {
            prop_assert!((0.0..=1.0).contains(&p));
        }
        for g2 in [cross_correlation(&rec), write_autocorrelation(&rec), read_autocorrelation(&rec)]
            .into_iter()
            .flatten()
        {
            prop_assert!(g2.value >= 0.0 && g2.error >= 0.0);
        }
        if let Ok(s) = summarize(&rec, &reference_chain()) {
            let c = s.chi_estimate;
            prop_assert!(c.out_of_model || (0.0..=1.0).contains(&c.chi.value));
            prop_assert!(c.chi.error >= 0.0);
            for m in [s.p_w, s.p_r, s.p_wr, s.p_r_given_w, s.p_b] {
                prop_assert!((0.0..=1.0).contains(&m.value) && m.error >= 0.0);
            }
        }
    }

    #[test]
    fn efficiency_chain_is_a_product(a in 1e-3f64..=1.0, b in 1e-3f64..=1.0, c in 1e-3f64..=1.0) {
        let chain = EfficiencyChain::new(a, b, c).unwrap();
        prop_assert!((chain.total() - a * b * c).abs() <= 1e-12 * a * b * c);
    }
}

proptest! {
    // Each case integrates one or more ODEs.
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn retrieval_budget_closes((params, pulse) in three_level()) {
        let opts = efficiency_only();
        let r = integrate_retrieval(&params, &pulse, &opts).unwrap();
        let b = r.budget;
        prop_assert!((0.0..=1.0).contains(&r.chi));
        prop_assert!(b.through_cavity >= 0.0 && b.through_atom >= 0.0 && b.through_spin >= 0.0);
        prop_assert!(b.residual_norm <= 1.0 + opts.tolerance);
        prop_assert_eq!(r.chi, b.through_cavity);
        prop_assert!((b.total() - 1.0).abs() <= 10.0 * opts.tolerance, "budget {}", b.total());
    }

    #[test]
    fn spin_wave_phase_is_irrelevant((params, pulse) in three_level(), phase in 0.0f64..std::f64::consts::TAU) {
        let opts = efficiency_only();
        let a = integrate_from(&params, &pulse, &opts, Complex64::new(1.0, 0.0)).unwrap().chi;
        let b = integrate_from(&params, &pulse, &opts, Complex64::from_polar(1.0, phase)).unwrap().chi;
        prop_assert!((a - b).abs() <= 10.0 * opts.tolerance, "{a} vs {b}");
    }

    #[test]
    fn detuning_conjugation_symmetry((params, pulse) in three_level()) {
        let opts = efficiency_only();
        let mirrored = params.with_detunings(mhz(0.0) - params.delta_c, mhz(0.0) - params.delta_r);
        let a = integrate_retrieval(&params, &pulse, &opts).unwrap().chi;
        let b = integrate_retrieval(&mirrored, &pulse, &opts).unwrap().chi;
        prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }

    #[test]
    fn efficiency_falls_with_spin_decay((params, pulse) in three_level(), extra in 0.001f64..1.0) {
        let opts = efficiency_only();
        let slower = integrate_retrieval(&params, &pulse, &opts).unwrap().chi;
        let faster = ThreeLevelParams { gamma_s: params.gamma_s + mhz(extra), ..params };
        let faster = integrate_retrieval(&faster, &pulse, &opts).unwrap().chi;
        prop_assert!(faster <= slower + 10.0 * opts.tolerance, "{faster} > {slower}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn scan_values_and_peaks_stay_in_range(
        (params, pulse) in three_level(),
        lo in -40.0f64..-5.0,
        hi in 5.0f64..40.0,
    ) {
        let dr = probe_grid(mhz(lo), mhz(hi), 15);
        let dc = [params.delta_c, params.delta_c + mhz(2.0)];
        let grid = scan_efficiency(&params, &pulse, &efficiency_only(), &dr, &dc).unwrap();
        for row in &grid.chi {
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        for peaks in &grid.peak_loci {
            prop_assert!(peaks.iter().all(|p| p.0 >= dr[0].0 && p.0 <= dr[dr.len() - 1].0));
        }
    }

    #[test]
    fn reflectance_fit_stays_in_bounds(n_true in 1e4f64..1e6, seed in any::<u64>()) {
        let geom = CavityGeometry::reference();
        let d = derive_cavity(&geom).unwrap();
        let model = FitModel::ReflectanceSpectrum {
            base: TwoLevelSystemParams::from_cavity(&d, AngularFrequency::ZERO, mhz(3.035)),
            g0: coupling_g0(&geom).unwrap(),
        };
        let obs = synthetic_observations(
            &model,
            &["atom_number"],
            &[n_true],
            &probe_grid(mhz(-60.0), mhz(60.0), 121),
            Noise::Multiplicative { sigma: 0.01 },
            seed,
        )
        .unwrap();
        let (lower, upper) = (0.0, 2e6);
        let problem = FitProblem {
            observations: obs,
            model,
            free: vec![FreeParam::new("atom_number", 2e5, lower, upper)],
            options: FitOptions::default(),
        };
        let report = fit_reflectance_n(&problem).unwrap();
        let e = report.get("atom_number").unwrap();
        prop_assert!(e.value >= lower && e.value <= upper);
        prop_assert!(e.ci95.1 > e.ci95.0, "{:?}", e.ci95);
        prop_assert!(e.ci95.0 <= e.value && e.value <= e.ci95.1);
    }
}
