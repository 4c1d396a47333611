// Two independent routes to χ(τ): closed-form per-mode echo kernels, and the
// time-domain correlation → FFT spectrum → filter quadrature.

use spinbath_core::bath_analytic::{ensemble_correlation, spectrum_from_correlation, SpectrumOptions};
use spinbath_core::coherence::{bath_chi, chi_ou, coherence_from_spectrum};
use spinbath_core::*;

fn mhz(f: f64) -> AngularFrequency {
    mhz_to_angular(f).unwrap()
}

fn bath() -> BathSpec {
    BathSpec::new(vec![BathComponent {
        gamma_intrinsic: AngularFrequency::from_correlation_time(us(0.4)).unwrap(),
        inhomogeneous_fwhm: mhz(15.7),
        coupling_rms: mhz(0.5),
        resonance: mhz(885.3),
        driven: true,
    }])
    .unwrap()
}

fn fft_chi(bath: &BathSpec, drive: &DriveSpec, taus: &[f64]) -> Vec<f64> {
    let comp = &bath.components[0];
    let grid = TimeGrid::covering(us(10.0), ns(1.0)).unwrap();
    let trace = ensemble_correlation(comp, drive, &grid).unwrap();
    let spec = spectrum_from_correlation(&[(&trace, comp.variance())], SpectrumOptions { pad_factor: 4, ..Default::default() })
        .unwrap();
    coherence_from_spectrum(&spec, taus).unwrap().c.iter().map(|c| -c.ln()).collect()
}

#[test]
fn routes_agree_for_each_drive_shape() {
    let bath = bath();
    let taus: Vec<f64> = [0.5, 1.0, 2.0, 4.0, 8.0].map(us).to_vec();
    for drive in [
        DriveSpec::off(),
        DriveSpec::monochromatic(mhz(4.9)),
        DriveSpec::lorentzian(mhz(4.9), mhz(17.4)),
        DriveSpec::gaussian(mhz(4.9), mhz(17.0)),
    ] {
        let closed = bath_chi(&bath, &drive, &taus).unwrap();
        let fft = fft_chi(&bath, &drive, &taus);
        for ((t, a), b) in taus.iter().zip(&closed).zip(&fft) {
            let rel = (a - b).abs() / a;
            assert!(rel < 1e-2, "{:?} τ = {t:e}: closed {a:e} vs fft {b:e}", drive.shape);
        }
    }
}

#[test]
fn undriven_matches_ou_formula() {
    let bath = bath();
    let c = &bath.components[0];
    let taus: Vec<f64> = [0.1, 1.0, 10.0].map(us).to_vec();
    let closed = bath_chi(&bath, &DriveSpec::off(), &taus).unwrap();
    for (t, x) in taus.iter().zip(closed) {
        let ou = chi_ou(c.variance(), c.gamma_intrinsic.rad_per_s(), *t);
        assert!((x - ou).abs() <= 1e-9 * ou, "τ = {t:e}");
    }
}
