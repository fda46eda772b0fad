use cavity_spinwave::retrieval::{reference_params, reference_pulse, RetrievalOptions};
use cavity_spinwave::scan::{od_sweep, OdReference, OdSweepOptions};
use cavity_spinwave::AngularFrequency;

#[test]
fn doubling_od_scales_splitting_by_sqrt2_at_strong_coupling() {
    let reference = OdReference {
        od_ref: 1.0,
        g_ref: AngularFrequency::from_mhz(22.35),
    };
    let run = |ods: &[f64]| {
        od_sweep(
            &reference_params(),
            &reference_pulse(),
            &RetrievalOptions::default(),
            ods,
            reference,
            &OdSweepOptions::default(),
        )
        .unwrap()
    };
    // g from 2π·63 MHz upward, well above Ω0, κ and γ.
    let base = run(&[8.0, 16.0, 32.0]);
    let doubled = run(&[16.0, 32.0, 64.0]);
    for (a, b) in base.splittings.iter().zip(&doubled.splittings) {
        let ratio = b.unwrap().0 / a.unwrap().0;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.02, "ratio {ratio}");
    }
}
