mod common;

use common::{calibrated, mhz};
use spinbath_core::bath_mc::{echo_coherence_mc, MCConfig, PulseSchedule};
use spinbath_core::experiments::{calibrate_kappa_mc, deer_mc, deer_rabi, DeerProbe};
use spinbath_core::*;

#[test]
fn drive_ordering_on_calibrated_bath() {
    let bath = calibrated();
    let cfg = MCConfig { n_spins: 8, n_realizations: 200, integrator_step: ns(0.4), seed: SeedSet::new(11) };
    let c_at = |drive: DriveSpec| {
        let curve = echo_coherence_mc(bath, &drive, &cfg, &PulseSchedule::hahn(vec![us(50.0)], drive.is_active())).unwrap();
        (curve.c[0], curve.stderr.unwrap()[0])
    };
    let (off, se_off) = c_at(DriveSpec::off());
    let (mono, se_mono) = c_at(DriveSpec::monochromatic(mhz(4.9)));
    let (stoch, se_stoch) = c_at(DriveSpec::lorentzian(mhz(4.9), mhz(17.4)));
    assert!(mono - off > 2.0 * se_mono.hypot(se_off), "mono {mono} vs off {off}");
    assert!(stoch - mono > 2.0 * se_stoch.hypot(se_mono), "stochastic {stoch} vs mono {mono}");
}

#[test]
fn deer_kernel_matches_monte_carlo() {
    let bath = calibrated();
    let base = DeerProbe::from_bath(bath, us(16.0)).unwrap();
    let cfg = MCConfig { n_spins: 20, n_realizations: 2000, integrator_step: ns(0.5), seed: SeedSet::new(7) };
    let omega = mhz(8.7);
    let k = calibrate_kappa_mc(bath, &base, &cfg, ns(57.5), omega).unwrap();
    // Closed-form Gaussian-limit κ is close to the MC value.
    assert!((k.kappa / base.kappa - 1.0).abs() < 0.25, "κ_mc {} vs κ_gauss {}", k.kappa, base.kappa);
    let probe = DeerProbe { kappa: k.kappa, bare: k.bare, ..base };
    let ts = [0.0, 20.0, 40.0, 80.0, 160.0].map(ns);
    let grid = TimeGrid::new(0.0, ns(5.0), 33).unwrap();
    let semi = deer_rabi(&probe, &grid, &[AngularFrequency::ZERO], omega).unwrap().remove(0);
    let mc = deer_mc(bath, &probe, &cfg, &ts, omega, AngularFrequency::ZERO).unwrap();
    let se = mc.stderr.unwrap();
    for (i, t) in ts.iter().enumerate() {
        let j = (t / ns(5.0)).round() as usize;
        let z = (mc.c[i] - semi.c[j]) / se[i].max(1e-12);
        assert!(z.abs() < 3.0, "t_ss = {t:e}: MC {} ± {} vs kernel {}", mc.c[i], se[i], semi.c[j]);
    }
}

#[test]
fn halving_the_step_converges() {
    let bath = BathSpec::new(vec![BathComponent {
        gamma_intrinsic: AngularFrequency::from_correlation_time(us(2.0)).unwrap(),
        inhomogeneous_fwhm: mhz(15.7),
        coupling_rms: mhz(0.12),
        resonance: mhz(885.3),
        driven: true,
    }])
    .unwrap();
    let taus: Vec<f64> = [0.5, 1.0, 2.0, 4.0].map(us).to_vec();
    for drive in [DriveSpec::monochromatic(mhz(4.9)), DriveSpec::gaussian(mhz(4.9), mhz(17.0))] {
        let run = |step| {
            let cfg = MCConfig { n_spins: 50, n_realizations: 64, integrator_step: step, seed: SeedSet::new(5) };
            echo_coherence_mc(&bath, &drive, &cfg, &PulseSchedule::hahn(taus.clone(), true)).unwrap().c
        };
        let (coarse, fine) = (run(ns(0.4)), run(ns(0.2)));
        for (a, b) in coarse.iter().zip(&fine) {
            assert!((a - b).abs() < 1e-3, "{:?}: {a} vs {b}", drive.shape);
        }
    }
}
