//! Measurement emulations on top of the coherence pipeline: DEER spectroscopy
//! and Rabi damping, driven bath spectra, bath calibration, T2 sweeps and
//! drive optimization.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath_analytic::{effective_rate, spectrum_from_correlation, ComponentModel, CorrelationTrace, NoiseSpectrum, SpectrumOptions};
use crate::bath_mc::{echo_coherence_mc, MCConfig};
pub use crate::bath_mc::{BathPulse, PulseSchedule};
use crate::coherence::{bath_chi, filter_hahn, improvement_condition, t2_pipeline, FitResult, ImprovementCheck};
use crate::error::{Error, Result};
use crate::fit::{least_squares, LsqOptions};
use crate::search::{brent_root, golden_section};
use crate::units::{
    larmor_frequency, log_space, mhz_to_angular, us, AngularFrequency, BathComponent, BathSpec, DriveShape,
    DriveSpec, TimeGrid,
};

/// Drive for a (shape, Ω, Δν) cell: Ω = 0 is off, Δν = 0 is monochromatic.
pub fn drive_for(shape: DriveShape, omega: AngularFrequency, linewidth: AngularFrequency) -> DriveSpec {
    if omega.rad_per_s() == 0.0 {
        DriveSpec::off()
    } else {
        DriveSpec::with_shape(shape, omega, linewidth)
    }
}

// ---------------------------------------------------------------- DEER ----

/// The bath class a DEER pulse addresses, plus the echo it is embedded in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeerProbe {
    pub inhomogeneous_fwhm: AngularFrequency,
    pub resonance: AngularFrequency,
    /// Intrinsic rate; only enters the continuous-drive spectra.
    pub gamma: AngularFrequency,
    pub tau: f64,
    /// Contrast per unit decorrelation.
    pub kappa: f64,
    /// Hahn-echo coherence at τ without the bath pulse.
    pub bare: f64,
}

impl DeerProbe {
    /// Surface-spin probe at B₀ = 315 G, 2Γ₂ = 15.7 MHz, τ = 16 µs.
    pub fn reference() -> Self {
        Self {
            inhomogeneous_fwhm: mhz(15.7),
            resonance: larmor_frequency(315.0).expect("positive field"),
            gamma: AngularFrequency::from_correlation_time(us(0.37)).expect("positive"),
            tau: us(16.0),
            kappa: 0.5,
            bare: 0.5,
        }
    }

    /// Probe matched to a bath: detuning width and resonance of the driven
    /// component with the largest coupling, bare coherence from the pipeline,
    /// and the Gaussian-limit κ for an instantaneous pulse at τ/2,
    /// κ = Σ_driven c²[(1 − e^{−Γτ/2})/Γ]².
    pub fn from_bath(bath: &BathSpec, tau: f64) -> Result<Self> {
        bath.validate()?;
        let main = bath
            .components
            .iter()
            .filter(|c| c.driven)
            .max_by(|a, b| a.variance().total_cmp(&b.variance()))
            .ok_or_else(|| Error::invalid("bath has no driven component to probe"))?;
        let bare = (-bath_chi(bath, &DriveSpec::off(), &[tau])?[0]).exp();
        let kappa = bath
            .components
            .iter()
            .filter(|c| c.driven)
            .map(|c| {
                let g = c.gamma_intrinsic.rad_per_s();
                let w = if g * tau < 1e-8 { 0.5 * tau } else { -(-0.5 * g * tau).exp_m1() / g };
                c.variance() * w * w
            })
            .sum();
        Ok(Self {
            inhomogeneous_fwhm: main.inhomogeneous_fwhm,
            resonance: main.resonance,
            gamma: main.gamma_intrinsic,
            tau,
            kappa,
            bare,
        })
    }

    fn component(&self, gamma: AngularFrequency) -> BathComponent {
        BathComponent {
            gamma_intrinsic: gamma,
            inhomogeneous_fwhm: self.inhomogeneous_fwhm,
            coupling_rms: AngularFrequency::new(1.0).expect("finite"),
            resonance: self.resonance,
            driven: true,
        }
    }

    /// 1 − ḡ(t) from the pulse alone (no intrinsic relaxation), detuning
    /// averaged.
    pub fn decorrelation(&self, drive: &DriveSpec, grid: &TimeGrid) -> Result<Vec<f64>> {
        let model = ComponentModel::new(&self.component(AngularFrequency::ZERO), drive)?;
        Ok(model.correlation(grid)?.into_iter().map(|g| 1.0 - g).collect())
    }

    pub fn contrast(&self, decorrelation: f64) -> f64 {
        self.bare * (-self.kappa * decorrelation).exp()
    }
}

fn mhz(f: f64) -> AngularFrequency {
    mhz_to_angular(f).expect("finite literal")
}

/// Coherence vs bath-pulse carrier at fixed pulse length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeerSpectrum {
    pub carrier: Vec<f64>,
    pub c: Vec<f64>,
    pub t_ss: f64,
    pub omega: AngularFrequency,
    pub warnings: Vec<String>,
}

impl DeerSpectrum {
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["f_ss_mhz", "c"])?;
        for (f, c) in self.carrier.iter().zip(&self.c) {
            out.write_record([(f / (2.0 * PI * 1e6)).to_string(), c.to_string()])?;
        }
        out.flush()
    }

    /// Carrier of the deepest point.
    pub fn dip(&self) -> f64 {
        let k = self.c.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).unwrap_or(0);
        self.carrier[k]
    }
}

pub fn deer_spectrum(
    probe: &DeerProbe,
    carriers: &[AngularFrequency],
    t_ss: f64,
    omega: AngularFrequency,
) -> Result<DeerSpectrum> {
    if carriers.len() < 3 {
        return Err(Error::invalid("DEER spectrum needs at least 3 carrier frequencies"));
    }
    if !(t_ss > 0.0) || !(omega.rad_per_s() > 0.0) {
        return Err(Error::invalid("DEER pulse needs t_ss > 0 and Ω > 0"));
    }
    let mut warnings = Vec::new();
    let area = omega.rad_per_s() * t_ss;
    if (area - PI).abs() > 0.1 * PI {
        warnings.push(format!("pulse area Ω·t_ss = {:.3}π is not a π pulse", area / PI));
    }
    let step = carriers.windows(2).map(|w| (w[1].rad_per_s() - w[0].rad_per_s()).abs()).fold(0.0, f64::max);
    let width = probe.inhomogeneous_fwhm.rad_per_s().max(omega.rad_per_s());
    if step > 0.25 * width {
        return Err(Error::Resolution(format!(
            "carrier step {:.3} MHz cannot resolve a dip of width ~{:.3} MHz",
            step / (2.0 * PI * 1e6),
            width / (2.0 * PI * 1e6)
        )));
    }
    let grid = TimeGrid::new(0.0, t_ss, 2)?;
    let c = carriers
        .par_iter()
        .map(|&f| {
            let d = probe.decorrelation(&DriveSpec::monochromatic(omega).with_carrier(f), &grid)?;
            Ok(probe.contrast(d[1]))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DeerSpectrum { carrier: carriers.iter().map(|f| f.rad_per_s()).collect(), c, t_ss, omega, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeerSpectrumFit {
    pub resonance: AngularFrequency,
    pub inhomogeneous_fwhm: AngularFrequency,
    pub kappa: f64,
    pub bare: f64,
    pub rms_residual: f64,
}

/// Refits resonance, 2Γ₂, κ and the bare level with the finite-pulse
/// forward model.
pub fn fit_deer_spectrum(spec: &DeerSpectrum) -> Result<DeerSpectrumFit> {
    let top = spec.c.iter().cloned().fold(f64::MIN, f64::max);
    let bottom = spec.c.iter().cloned().fold(f64::MAX, f64::min);
    if !(bottom > 0.0 && top > bottom) {
        return Err(Error::Fit("DEER spectrum has no dip".into()));
    }
    // Half-depth width in ln C as the starting 2Γ₂.
    let half = 0.5 * (top.ln() + bottom.ln());
    let inside: Vec<f64> = spec.carrier.iter().zip(&spec.c).filter(|(_, c)| c.ln() < half).map(|(f, _)| *f).collect();
    let w0 = (inside.last().unwrap_or(&0.0) - inside.first().unwrap_or(&0.0)).max(0.5 * spec.omega.rad_per_s());
    let f0 = spec.dip();
    let grid = TimeGrid::new(0.0, spec.t_ss, 2)?;
    let model = |q: &[f64]| -> Result<Vec<f64>> {
        let probe = DeerProbe {
            inhomogeneous_fwhm: AngularFrequency::new(w0 * q[1].exp())?,
            resonance: AngularFrequency::new(f0 + q[0] * w0)?,
            gamma: AngularFrequency::ZERO,
            tau: 0.0,
            kappa: q[2].exp(),
            bare: q[3].exp(),
        };
        spec.carrier
            .par_iter()
            .zip(&spec.c)
            .map(|(&f, &c)| {
                let drive = DriveSpec::monochromatic(spec.omega).with_carrier(AngularFrequency::new(f)?);
                Ok(probe.contrast(probe.decorrelation(&drive, &grid)?[1]) - c)
            })
            .collect()
    };
    let k0 = (top / bottom).ln() / 1.5;
    let out = least_squares(model, &[0.0, 0.0, k0.ln(), top.ln()], LsqOptions { rel_step: 1e-6, ..Default::default() })?;
    let q = &out.params;
    Ok(DeerSpectrumFit {
        resonance: AngularFrequency::new(f0 + q[0] * w0)?,
        inhomogeneous_fwhm: AngularFrequency::new(w0 * q[1].exp())?,
        kappa: q[2].exp(),
        bare: q[3].exp(),
        rms_residual: out.rms(),
    })
}

/// Coherence vs bath-pulse length for one drive linewidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeerRabiCurve {
    pub linewidth: AngularFrequency,
    pub grid: TimeGrid,
    pub c: Vec<f64>,
}

impl DeerRabiCurve {
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_ss_ns", "c"])?;
        for (t, c) in self.grid.points().zip(&self.c) {
            out.write_record([(t * 1e9).to_string(), c.to_string()])?;
        }
        out.flush()
    }

    /// Rate r of an exponentially decaying bath correlation,
    /// C = C₀·exp[−k(1 − e^{−rt})], with C₀ the t_ss = 0 value.
    pub fn decorrelation_rate(&self) -> Result<f64> {
        let c0 = self.c[0];
        let ts: Vec<f64> = self.grid.points().collect();
        let span = self.grid.end() - self.grid.start;
        let last = *self.c.last().expect("non-empty");
        if !(c0 > 0.0 && last > 0.0 && last < c0) {
            return Err(Error::Fit("curve does not decay".into()));
        }
        let out = least_squares(
            |q| {
                let (k, r) = (q[0].exp(), q[1].exp() / span);
                Ok(ts.iter().zip(&self.c).map(|(t, c)| c0 * (-k * -(-r * t).exp_m1()).exp() - c).collect())
            },
            &[(c0 / last).ln().ln(), 5f64.ln()],
            LsqOptions::default(),
        )?;
        Ok(out.params[1].exp() / span)
    }
}

fn rabi_resolution(grid: &TimeGrid, omega: AngularFrequency) -> Result<()> {
    if grid.step * omega.rad_per_s() > 0.25 * PI {
        return Err(Error::Resolution(format!(
            "t_ss step {:.3e} s gives fewer than 8 points per Rabi period",
            grid.step
        )));
    }
    Ok(())
}

pub fn deer_rabi(
    probe: &DeerProbe,
    grid: &TimeGrid,
    linewidths: &[AngularFrequency],
    omega: AngularFrequency,
) -> Result<Vec<DeerRabiCurve>> {
    if grid.start < 0.0 {
        return Err(Error::invalid("pulse lengths must be >= 0"));
    }
    linewidths
        .iter()
        .map(|&lw| {
            rabi_resolution(grid, omega)?;
            let drive = DriveSpec::with_shape(DriveShape::LorentzianStochastic, omega, lw).with_carrier(probe.resonance);
            let c = probe.decorrelation(&drive, grid)?.into_iter().map(|d| probe.contrast(d)).collect();
            Ok(DeerRabiCurve { linewidth: lw, grid: *grid, c })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeerRabiFit {
    pub inhomogeneous_fwhm: AngularFrequency,
    pub omega: AngularFrequency,
    pub kappa: f64,
    pub bare: f64,
    /// Standard errors of (2Γ₂, Ω) in rad/s.
    pub fwhm_err: f64,
    pub omega_err: f64,
    /// rms residual per input curve.
    pub residuals: Vec<f64>,
}

/// Joint least squares of shared (2Γ₂, Ω, κ, bare) over a family of curves;
/// at least one must be monochromatic to pin Ω.
pub fn fit_deer_rabi(curves: &[DeerRabiCurve]) -> Result<DeerRabiFit> {
    if curves.is_empty() {
        return Err(Error::invalid("no DEER Rabi curves to fit"));
    }
    let mono = curves
        .iter()
        .find(|c| c.linewidth.rad_per_s() == 0.0)
        .ok_or_else(|| Error::invalid("DEER Rabi fit needs a Δν = 0 curve"))?;
    if curves.iter().any(|c| c.c.len() < 8 || c.c.len() != c.grid.count) {
        return Err(Error::invalid("each DEER Rabi curve needs >= 8 points on its grid"));
    }
    if curves.iter().flat_map(|c| &c.c).any(|&v| !(v > 0.0)) {
        return Err(Error::Fit("DEER Rabi data must be positive".into()));
    }
    let resonance = mhz(1000.0);
    let probe_at = |fwhm: f64, kappa: f64, bare: f64| -> Result<DeerProbe> {
        Ok(DeerProbe {
            inhomogeneous_fwhm: AngularFrequency::new(fwhm)?,
            resonance,
            gamma: AngularFrequency::ZERO,
            tau: 0.0,
            kappa,
            bare,
        })
    };
    let decorrelations = |fwhm: f64, omega: f64| -> Result<Vec<Vec<f64>>> {
        let probe = probe_at(fwhm, 0.0, 1.0)?;
        curves
            .iter()
            .map(|cv| {
                let drive = DriveSpec::with_shape(DriveShape::LorentzianStochastic, AngularFrequency::new(omega)?, cv.linewidth)
                    .with_carrier(resonance);
                probe.decorrelation(&drive, &cv.grid)
            })
            .collect()
    };

    // Start: dense (Ω, 2Γ₂) grid with (ln bare, κ) solved linearly from
    // ln C = ln bare − κ(1 − ḡ).
    let span = mono.grid.end() - mono.grid.start;
    let om_lo = (PI / span).max(mhz(0.2).rad_per_s());
    let om_hi = (PI / (2.0 * mono.grid.step)).min(mhz(200.0).rad_per_s()).max(2.0 * om_lo);
    let starts: Vec<(f64, f64)> = log_space(om_lo, om_hi, 48)
        .into_iter()
        .flat_map(|om| [0.25, 0.5, 1.0, 2.0, 4.0].map(|k| (om, k * om)))
        .collect();
    let scored: Vec<(f64, [f64; 4])> = starts
        .par_iter()
        .filter_map(|&(om, fw)| {
            let d = decorrelations(fw, om).ok()?;
            let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (dv, cv) in d.iter().zip(curves) {
                for (&x, &c) in dv.iter().zip(&cv.c) {
                    let y = c.ln();
                    sx += x;
                    sy += y;
                    sxx += x * x;
                    sxy += x * y;
                    n += 1.0;
                }
            }
            let det = n * sxx - sx * sx;
            if !(det.abs() > 1e-300) {
                return None;
            }
            let slope = (n * sxy - sx * sy) / det;
            let kappa = (-slope).max(1e-6);
            let lnb = (sy + kappa * sx) / n;
            let ssr: f64 = d
                .iter()
                .zip(curves)
                .flat_map(|(dv, cv)| dv.iter().zip(&cv.c).map(move |(&x, &c)| (lnb.exp() * (-kappa * x).exp() - c).powi(2)))
                .sum();
            Some((ssr, [fw.ln(), om.ln(), kappa.ln(), lnb]))
        })
        .collect();
    let (_, p0) = scored
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::Fit("no admissible starting point for the DEER Rabi fit".into()))?;

    let residuals = |q: &[f64]| -> Result<Vec<f64>> {
        let d = decorrelations(q[0].exp(), q[1].exp())?;
        let (kappa, bare) = (q[2].exp(), q[3].exp());
        Ok(d.iter()
            .zip(curves)
            .flat_map(|(dv, cv)| dv.iter().zip(&cv.c).map(move |(&x, &c)| bare * (-kappa * x).exp() - c))
            .collect())
    };
    let out = least_squares(residuals, &p0, LsqOptions { rel_step: 1e-6, ..Default::default() })?;
    let q = &out.params;
    let (fwhm, omega) = (q[0].exp(), q[1].exp());
    let cov = out.covariance();
    let err = |i: usize, v: f64| cov.as_ref().map_or(f64::NAN, |c| v * c[(i, i)].max(0.0).sqrt());
    let mut per_curve = Vec::with_capacity(curves.len());
    let mut offset = 0;
    for cv in curves {
        let r = &out.residuals[offset..offset + cv.c.len()];
        per_curve.push((r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt());
        offset += cv.c.len();
    }
    Ok(DeerRabiFit {
        inhomogeneous_fwhm: AngularFrequency::new(fwhm)?,
        omega: AngularFrequency::new(omega)?,
        kappa: q[2].exp(),
        bare: q[3].exp(),
        fwhm_err: err(0, fwhm),
        omega_err: err(1, omega),
        residuals: per_curve,
    })
}

/// κ from a Monte-Carlo reference: echo with and without an on-resonance
/// bath pulse of length t_ss, sharing random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaCalibration {
    pub kappa: f64,
    pub bare: f64,
    pub pulsed: f64,
    pub pulsed_stderr: f64,
}

pub fn calibrate_kappa_mc(
    bath: &BathSpec,
    probe: &DeerProbe,
    cfg: &MCConfig,
    t_ss: f64,
    omega: AngularFrequency,
) -> Result<KappaCalibration> {
    let bare = deer_mc(bath, probe, cfg, &[0.0], omega, AngularFrequency::ZERO)?;
    let pulsed = deer_mc(bath, probe, cfg, &[t_ss], omega, AngularFrequency::ZERO)?;
    let drive = DriveSpec::monochromatic(omega).with_carrier(probe.resonance);
    let d = probe.decorrelation(&drive, &TimeGrid::new(0.0, t_ss, 2)?)?[1];
    let (b, p) = (bare.c[0], pulsed.c[0]);
    if !(b > 0.0 && p > 0.0 && d > 0.0) {
        return Err(Error::Fit("MC reference gives no measurable DEER contrast".into()));
    }
    Ok(KappaCalibration {
        kappa: (b / p).ln() / d,
        bare: b,
        pulsed: p,
        pulsed_stderr: pulsed.stderr.map_or(f64::NAN, |s| s[0]),
    })
}

/// Monte-Carlo DEER: echo at the probe's τ with a bath pulse right after the
/// qubit π, one run per pulse length.
pub fn deer_mc(
    bath: &BathSpec,
    probe: &DeerProbe,
    cfg: &MCConfig,
    t_ss: &[f64],
    omega: AngularFrequency,
    linewidth: AngularFrequency,
) -> Result<crate::coherence::CoherenceCurve> {
    let drive = DriveSpec::with_shape(DriveShape::LorentzianStochastic, omega, linewidth).with_carrier(probe.resonance);
    let mut c = Vec::with_capacity(t_ss.len());
    let mut se = Vec::with_capacity(t_ss.len());
    for &t in t_ss {
        let sched = PulseSchedule::deer(vec![probe.tau], BathPulse { delay: 0.0, duration: t, drive });
        let curve = echo_coherence_mc(bath, &DriveSpec::off(), cfg, &sched)?;
        c.push(curve.c[0]);
        se.push(curve.stderr.map_or(f64::NAN, |s| s[0]));
    }
    Ok(crate::coherence::CoherenceCurve { tau: t_ss.to_vec(), c, stderr: Some(se) })
}

/// One continuously driven probe spectrum with its echo-filter overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivenSpectrum {
    /// `None` for the undriven reference.
    pub linewidth: Option<AngularFrequency>,
    pub spectrum: NoiseSpectrum,
    /// (1/π)∫S(ω)F(τ,ω)dω with S normalized to unit power.
    pub overlap: f64,
}

/// Normalized spectra of the probe under continuous driving at each
/// linewidth, plus the undriven reference, and their overlap with the Hahn
/// filter at `tau_filter`.
pub fn driven_spectra(
    probe: &DeerProbe,
    linewidths: &[AngularFrequency],
    omega: AngularFrequency,
    tau_filter: f64,
) -> Result<Vec<DrivenSpectrum>> {
    let gamma = probe.gamma.rad_per_s();
    if !(gamma > 0.0) {
        return Err(Error::invalid("driven spectra need a probe with Γ > 0 so correlations decay"));
    }
    let comp = probe.component(probe.gamma);
    let mut cases: Vec<Option<AngularFrequency>> = vec![None];
    cases.extend(linewidths.iter().map(|&l| Some(l)));
    cases
        .par_iter()
        .map(|&lw| {
            let drive = match lw {
                None => DriveSpec::off(),
                Some(l) => DriveSpec::with_shape(DriveShape::LorentzianStochastic, omega, l).with_carrier(probe.resonance),
            };
            let fastest = [omega.rad_per_s(), lw.map_or(0.0, |l| l.rad_per_s()), probe.inhomogeneous_fwhm.rad_per_s(), gamma]
                .into_iter()
                .fold(0.0, f64::max);
            let step = 0.1 / fastest;
            let duration = 12.0 / gamma;
            let grid = TimeGrid::covering(duration, step)?;
            let g = ComponentModel::new(&comp, &drive)?.correlation(&grid)?;
            let trace = CorrelationTrace { grid, g, variance: 1.0, stderr: None };
            let spectrum =
                spectrum_from_correlation(&[(&trace, 1.0)], SpectrumOptions { normalize: true, ..Default::default() })?;
            let f: Vec<f64> = spectrum.grid.points().map(|w| filter_hahn(tau_filter, w)).collect();
            let integrand: Vec<f64> = spectrum.s.iter().zip(&f).map(|(s, f)| s * f).collect();
            let overlap = trapezoid(&integrand, spectrum.grid.step) / PI;
            Ok(DrivenSpectrum { linewidth: lw, spectrum, overlap })
        })
        .collect()
}

fn trapezoid(y: &[f64], h: f64) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    h * (y.iter().sum::<f64>() - 0.5 * (y[0] + y[y.len() - 1]))
}

// --------------------------------------------------------- calibration ----

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub drive: DriveSpec,
    /// Target T2(drive)/T2(bare).
    pub ratio: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub bare_t2: f64,
    pub bare_weight: f64,
    pub points: Vec<CalibrationPoint>,
}

impl CalibrationTargets {
    pub fn bare_only(bare_t2: f64) -> Self {
        Self { bare_t2, bare_weight: 1.0, points: Vec::new() }
    }

    /// Bare 33.1 µs (weighted ×3) and four driven ratios: (4.9 MHz,
    /// 17.4 MHz) → 2.7, (4.9 MHz, mono) → 1.8, (3 MHz, 17 MHz) → 2.0,
    /// (8 MHz, mono) → 2.0.
    pub fn reference() -> Self {
        let lor = |o, d| DriveSpec::lorentzian(mhz(o), mhz(d));
        let mono = |o| DriveSpec::monochromatic(mhz(o));
        let pt = |drive, ratio| CalibrationPoint { drive, ratio, weight: 1.0 };
        Self {
            bare_t2: us(33.1),
            bare_weight: 3.0,
            points: vec![pt(lor(4.9, 17.4), 2.7), pt(mono(4.9), 1.8), pt(lor(3.0, 17.0), 2.0), pt(mono(8.0), 2.0)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bare_t2 > 0.0 && self.bare_weight > 0.0) {
            return Err(Error::invalid("calibration needs bare T2 > 0 and a positive weight"));
        }
        for p in &self.points {
            p.drive.validate()?;
            if !(p.ratio > 0.0 && p.weight >= 0.0) {
                return Err(Error::invalid("calibration ratios must be > 0 and weights >= 0"));
            }
        }
        Ok(())
    }
}

/// Two driven g = 2 baths (τc = 68 µs and 0.37 µs, 2Γ₂ = 15.7 MHz at the
/// 315 G resonance) plus an undriven residual bath with τc = `residual_tau_c`.
/// Couplings are rough starting values for `calibrate_bath`.
pub fn reference_template(residual_tau_c: f64) -> Result<BathSpec> {
    let res = larmor_frequency(315.0)?;
    let comp = |tau_c: f64, c_khz: f64, driven| -> Result<BathComponent> {
        Ok(BathComponent {
            gamma_intrinsic: AngularFrequency::from_correlation_time(tau_c)?,
            inhomogeneous_fwhm: mhz(15.7),
            coupling_rms: mhz_to_angular(c_khz * 1e-3)?,
            resonance: res,
            driven,
        })
    };
    BathSpec::new(vec![comp(us(68.0), 5.0, true)?, comp(us(0.37), 40.0, true)?, comp(residual_tau_c, 5.0, false)?])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub bath: BathSpec,
    pub bare_t2: f64,
    /// Achieved T2 ratio per target point.
    pub ratios: Vec<f64>,
    /// Weighted log residuals, bare first.
    pub residuals: Vec<f64>,
    pub evaluations: usize,
}

/// Worst acceptable weighted log residual (≈ 10 %).
const CALIBRATION_TOLERANCE: f64 = 0.0953;

fn with_couplings(template: &BathSpec, free: &[usize], logc: &[f64]) -> Result<BathSpec> {
    let mut bath = template.clone();
    for (&i, &lc) in free.iter().zip(logc) {
        bath.components[i].coupling_rms = AngularFrequency::new(lc.exp())?;
    }
    Ok(bath)
}

fn calibration_residuals(targets: &CalibrationTargets, bath: &BathSpec) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut drives = vec![DriveSpec::off()];
    drives.extend(targets.points.iter().map(|p| p.drive));
    let t2s = drives.par_iter().map(|d| Ok(t2_pipeline(bath, d)?.t2)).collect::<Result<Vec<f64>>>()?;
    let bare = t2s[0];
    let ratios: Vec<f64> = t2s[1..].iter().map(|t| t / bare).collect();
    let mut res = vec![targets.bare_weight * (bare / targets.bare_t2).ln()];
    res.extend(targets.points.iter().zip(&ratios).map(|(p, r)| p.weight * (r / p.ratio).ln()));
    Ok((bare, ratios, res))
}

/// Least squares over the log couplings of every component whose template
/// coupling is non-zero, matching bare T2 and the driven ratios.
pub fn calibrate_bath(targets: &CalibrationTargets, template: &BathSpec) -> Result<CalibrationResult> {
    targets.validate()?;
    template.validate_components()?;
    let free: Vec<usize> =
        (0..template.components.len()).filter(|&i| template.components[i].coupling_rms.rad_per_s() > 0.0).collect();
    if free.is_empty() {
        return Err(Error::Unreachable {
            message: "template has no non-zero coupling to calibrate".into(),
            best_residual: f64::INFINITY,
        });
    }
    let p0: Vec<f64> = free.iter().map(|&i| template.components[i].coupling_rms.rad_per_s().ln()).collect();
    // Trial steps far outside the physical range can make the pipeline fail
    // (no decay within 10 s); those count as a large, finite misfit.
    let penalty = 10.0;
    let n_res = 1 + targets.points.len();
    let out = least_squares(
        |q| {
            let bath = with_couplings(template, &free, q)?;
            Ok(match calibration_residuals(targets, &bath) {
                Ok((_, _, r)) => r,
                Err(e) if e.is_input_error() => return Err(e),
                Err(_) => vec![penalty; n_res],
            })
        },
        &p0,
        LsqOptions { rel_step: 1e-5, tol: 1e-8, patience: 40 },
    )?;
    let bath = with_couplings(template, &free, &out.params)?;
    let (bare, ratios, residuals) = calibration_residuals(targets, &bath)?;
    let worst = residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
    if worst > CALIBRATION_TOLERANCE {
        return Err(Error::Unreachable {
            message: format!("calibration targets not met within 10% (worst weighted log residual {worst:.3})"),
            best_residual: worst,
        });
    }
    Ok(CalibrationResult { bath, bare_t2: bare, ratios, residuals, evaluations: out.evaluations })
}

// --------------------------------------------------------------- sweep ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub shape: DriveShape,
    pub omegas: Vec<AngularFrequency>,
    pub linewidths: Vec<AngularFrequency>,
    pub bare_t2: f64,
    /// `[omega][linewidth]`; NaN where the cell failed.
    pub t2: Vec<Vec<f64>>,
    pub n: Vec<Vec<f64>>,
    pub t2_err: Vec<Vec<f64>>,
    pub failures: Vec<Vec<Option<String>>>,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["omega_mhz", "dnu_mhz", "t2_us", "n", "t2_err_us", "ratio", "error"])?;
        for (i, om) in self.omegas.iter().enumerate() {
            for (j, lw) in self.linewidths.iter().enumerate() {
                out.write_record([
                    om.mhz().to_string(),
                    lw.mhz().to_string(),
                    (self.t2[i][j] * 1e6).to_string(),
                    self.n[i][j].to_string(),
                    (self.t2_err[i][j] * 1e6).to_string(),
                    (self.t2[i][j] / self.bare_t2).to_string(),
                    self.failures[i][j].clone().unwrap_or_default(),
                ])?;
            }
        }
        out.flush()
    }

    /// Index of the row maximum if it lies strictly inside the linewidth
    /// axis.
    pub fn interior_max(&self, row: usize) -> Option<usize> {
        let r = &self.t2[row];
        let (k, _) = r.iter().enumerate().filter(|(_, v)| v.is_finite()).max_by(|a, b| a.1.total_cmp(b.1))?;
        (k > 0 && k + 1 < r.len()).then_some(k)
    }
}

pub fn t2_sweep(
    bath: &BathSpec,
    omegas: &[AngularFrequency],
    linewidths: &[AngularFrequency],
    shape: DriveShape,
) -> Result<SweepResult> {
    bath.validate()?;
    if omegas.is_empty() || linewidths.is_empty() {
        return Err(Error::invalid("sweep axes must be non-empty"));
    }
    let bare_t2 = t2_pipeline(bath, &DriveSpec::off())?.t2;
    let cells: Vec<(usize, usize)> = (0..omegas.len()).flat_map(|i| (0..linewidths.len()).map(move |j| (i, j))).collect();
    let results: Vec<Result<FitResult>> =
        cells.par_iter().map(|&(i, j)| t2_pipeline(bath, &drive_for(shape, omegas[i], linewidths[j]))).collect();
    let blank = || vec![vec![f64::NAN; linewidths.len()]; omegas.len()];
    let (mut t2, mut n, mut t2_err) = (blank(), blank(), blank());
    let mut failures = vec![vec![None; linewidths.len()]; omegas.len()];
    for (&(i, j), r) in cells.iter().zip(results) {
        match r {
            Ok(f) => {
                t2[i][j] = f.t2;
                n[i][j] = f.n;
                t2_err[i][j] = f.t2_err();
            }
            Err(e) => failures[i][j] = Some(e.to_string()),
        }
    }
    Ok(SweepResult {
        shape,
        omegas: omegas.to_vec(),
        linewidths: linewidths.to_vec(),
        bare_t2,
        t2,
        n,
        t2_err,
        failures,
    })
}

// ------------------------------------------------------------ optimize ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinewidthOptimum {
    pub shape: DriveShape,
    pub omega: AngularFrequency,
    pub linewidth: AngularFrequency,
    pub t2: f64,
    /// The optimum sits at an end of the search range.
    pub at_boundary: bool,
    /// (Δν, T2) of the bracketing scan.
    pub scan: Vec<(f64, f64)>,
}

impl LinewidthOptimum {
    pub fn write_scan_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["dnu_mhz", "t2_us"])?;
        for (lw, t2) in &self.scan {
            out.write_record([(lw / (2.0 * PI * 1e6)).to_string(), (t2 * 1e6).to_string()])?;
        }
        out.flush()
    }
}

pub const LINEWIDTH_RANGE_MHZ: (f64, f64) = (0.1, 100.0);

/// Maximizes T2 over Δν ∈ [0.1, 100] MHz on a log axis: a 12-point scan,
/// then golden section around the best point to 2 % in Δν.
pub fn optimize_linewidth(bath: &BathSpec, omega: AngularFrequency, shape: DriveShape) -> Result<LinewidthOptimum> {
    if shape == DriveShape::Monochromatic {
        return Err(Error::invalid("linewidth optimization needs a stochastic shape"));
    }
    if !(omega.rad_per_s() > 0.0) {
        return Err(Error::invalid("linewidth optimization needs Ω > 0"));
    }
    let (lo, hi) = (mhz(LINEWIDTH_RANGE_MHZ.0).rad_per_s().ln(), mhz(LINEWIDTH_RANGE_MHZ.1).rad_per_s().ln());
    let t2_at = |x: f64| -> Result<f64> {
        Ok(t2_pipeline(bath, &DriveSpec::with_shape(shape, omega, AngularFrequency::new(x.exp())?))?.t2)
    };
    let xs: Vec<f64> = (0..12).map(|k| lo + (hi - lo) * k as f64 / 11.0).collect();
    let scan: Vec<f64> = xs.par_iter().map(|&x| t2_at(x)).collect::<Result<_>>()?;
    let k = scan.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).expect("12 points");
    let (a, b) = (xs[k.saturating_sub(1)], xs[(k + 1).min(11)]);
    let (x, neg) = golden_section(|x| Ok(-t2_at(x)?), a, b, 1.02f64.ln())?;
    let (x, t2) = if -neg >= scan[k] { (x, -neg) } else { (xs[k], scan[k]) };
    let at_boundary = x - lo < 1.02f64.ln() || hi - x < 1.02f64.ln();
    Ok(LinewidthOptimum {
        shape,
        omega,
        linewidth: AngularFrequency::new(x.exp())?,
        t2,
        at_boundary,
        scan: xs.iter().map(|x| x.exp()).zip(scan).collect(),
    })
}

// -------------------------------------------------------- power saving ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSavingReport {
    pub target_ratio: f64,
    pub shape: DriveShape,
    pub omega_mono: AngularFrequency,
    pub omega_stochastic: AngularFrequency,
    pub linewidth_stochastic: AngularFrequency,
    /// (Ω_mono/Ω_stoch)²; NaN when indeterminate.
    pub power_ratio: f64,
    /// Target ≤ 1: both schemes need Ω → 0 and the ratio is undefined.
    pub indeterminate: bool,
    /// Largest reachable T2 ratio: every driven component fully decoupled.
    pub ceiling_ratio: f64,
}

const OMEGA_SCAN_MHZ: (f64, f64, usize) = (0.05, 100.0, 16);

/// Smallest Ω on the log axis whose T2 ratio reaches `target`.
fn omega_for_ratio<F>(ratio: F, target: f64, scheme: &str) -> Result<f64>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let (lo, hi, n) = OMEGA_SCAN_MHZ;
    let xs: Vec<f64> = log_space(mhz(lo).rad_per_s(), mhz(hi).rad_per_s(), n).into_iter().map(f64::ln).collect();
    let vals: Vec<f64> = xs.par_iter().map(|&x| ratio(x.exp())).collect::<Result<_>>()?;
    let k = vals.iter().position(|&v| v >= target).ok_or_else(|| Error::Unreachable {
        message: format!("{scheme} drive cannot reach a T2 ratio of {target} below Ω/2π = {hi} MHz"),
        best_residual: target - vals.iter().cloned().fold(f64::MIN, f64::max),
    })?;
    if k == 0 {
        return Ok(xs[0].exp());
    }
    let x = brent_root(|x| Ok(ratio(x.exp())? - target), xs[k - 1], xs[k], 1e-3)?;
    Ok(x.exp())
}

/// Rabi frequencies that reach `target` × bare T2 with monochromatic and with
/// optimally broadened stochastic driving, and the power ratio between them.
pub fn power_saving_report(bath: &BathSpec, target: f64, shape: DriveShape) -> Result<PowerSavingReport> {
    bath.validate()?;
    if !(target > 0.0) {
        return Err(Error::invalid("target ratio must be > 0"));
    }
    if shape == DriveShape::Monochromatic {
        return Err(Error::invalid("stochastic scheme needs a stochastic shape"));
    }
    let bare = t2_pipeline(bath, &DriveSpec::off())?.t2;
    let undriven: Vec<BathComponent> = bath.components.iter().filter(|c| !c.driven).copied().collect();
    let ceiling_ratio = match BathSpec::new(undriven) {
        Ok(res) => t2_pipeline(&res, &DriveSpec::off())?.t2 / bare,
        Err(_) => f64::INFINITY,
    };
    let zero = AngularFrequency::ZERO;
    if target <= 1.0 + 1e-9 {
        return Ok(PowerSavingReport {
            target_ratio: target,
            shape,
            omega_mono: zero,
            omega_stochastic: zero,
            linewidth_stochastic: zero,
            power_ratio: f64::NAN,
            indeterminate: true,
            ceiling_ratio,
        });
    }
    if target >= ceiling_ratio {
        return Err(Error::Unreachable {
            message: format!("target {target} is at or above the undriven-residual ceiling {ceiling_ratio:.3}"),
            best_residual: target - ceiling_ratio,
        });
    }
    let mono = omega_for_ratio(
        |om| Ok(t2_pipeline(bath, &DriveSpec::monochromatic(AngularFrequency::new(om)?))?.t2 / bare),
        target,
        "monochromatic",
    )?;
    let stoch = omega_for_ratio(
        |om| Ok(optimize_linewidth(bath, AngularFrequency::new(om)?, shape)?.t2 / bare),
        target,
        "stochastic",
    )?;
    let best = optimize_linewidth(bath, AngularFrequency::new(stoch)?, shape)?;
    Ok(PowerSavingReport {
        target_ratio: target,
        shape,
        omega_mono: AngularFrequency::new(mono)?,
        omega_stochastic: AngularFrequency::new(stoch)?,
        linewidth_stochastic: best.linewidth,
        power_ratio: (mono / stoch).powi(2),
        indeterminate: false,
        ceiling_ratio,
    })
}

// ------------------------------------------------ improvement condition ----

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementCell {
    pub omega: AngularFrequency,
    pub predicted: ImprovementCheck,
    pub t2: f64,
    pub improved: bool,
}

/// √(ΓR) ≳ 2π/T2 is a single-bath statement. In a multi-component bath the
/// low-Ω drop comes from the slowest driven component, so Γ and T2 are that
/// component's rate and the T2 it would give on its own; R = Γ + 2Ω²/Δν.
/// Each cell pairs the prediction with whether the full bath improved.
pub fn improvement_column(
    bath: &BathSpec,
    omegas: &[AngularFrequency],
    linewidth: AngularFrequency,
    shape: DriveShape,
) -> Result<Vec<ImprovementCell>> {
    let slow = bath
        .components
        .iter()
        .filter(|c| c.driven && c.gamma_intrinsic.rad_per_s() > 0.0)
        .min_by(|a, b| a.gamma_intrinsic.rad_per_s().total_cmp(&b.gamma_intrinsic.rad_per_s()))
        .ok_or_else(|| Error::invalid("improvement condition needs a driven component with Γ > 0"))?;
    let gamma = slow.gamma_intrinsic;
    let t2_slow = t2_pipeline(&BathSpec::new(vec![*slow])?, &DriveSpec::off())?.t2;
    let sweep = t2_sweep(bath, omegas, &[linewidth], shape)?;
    omegas
        .iter()
        .zip(&sweep.t2)
        .map(|(&omega, row)| {
            let predicted = improvement_condition(gamma, effective_rate(omega, linewidth, gamma)?, t2_slow)?;
            Ok(ImprovementCell { omega, predicted, t2: row[0], improved: row[0] > sweep.bare_t2 })
        })
        .collect()
}

// ----------------------------------------------------- shape comparison ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeRow {
    pub omega: AngularFrequency,
    pub lorentzian_linewidth: AngularFrequency,
    pub lorentzian_t2: f64,
    pub gaussian_linewidth: AngularFrequency,
    pub gaussian_t2: f64,
    /// `None` on a tie (relative difference below 1e-6).
    pub winner: Option<DriveShape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub bare_t2: f64,
    pub rows: Vec<ShapeRow>,
}

impl ShapeReport {
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["omega_mhz", "lorentzian_dnu_mhz", "lorentzian_t2_us", "gaussian_dnu_mhz", "gaussian_t2_us", "winner"])?;
        for r in &self.rows {
            out.write_record([
                r.omega.mhz().to_string(),
                r.lorentzian_linewidth.mhz().to_string(),
                (r.lorentzian_t2 * 1e6).to_string(),
                r.gaussian_linewidth.mhz().to_string(),
                (r.gaussian_t2 * 1e6).to_string(),
                r.winner.map_or("tie", |s| s.name()).to_string(),
            ])?;
        }
        out.flush()
    }
}

pub fn shape_comparison(bath: &BathSpec, omegas: &[AngularFrequency]) -> Result<ShapeReport> {
    bath.validate()?;
    let bare_t2 = t2_pipeline(bath, &DriveSpec::off())?.t2;
    let rows = omegas
        .iter()
        .map(|&om| {
            if om.rad_per_s() == 0.0 {
                let z = AngularFrequency::ZERO;
                return Ok(ShapeRow {
                    omega: om,
                    lorentzian_linewidth: z,
                    lorentzian_t2: bare_t2,
                    gaussian_linewidth: z,
                    gaussian_t2: bare_t2,
                    winner: None,
                });
            }
            let l = optimize_linewidth(bath, om, DriveShape::LorentzianStochastic)?;
            let g = optimize_linewidth(bath, om, DriveShape::GaussianStochastic)?;
            let winner = if (g.t2 - l.t2).abs() <= 1e-6 * l.t2 {
                None
            } else if g.t2 > l.t2 {
                Some(DriveShape::GaussianStochastic)
            } else {
                Some(DriveShape::LorentzianStochastic)
            };
            Ok(ShapeRow {
                omega: om,
                lorentzian_linewidth: l.linewidth,
                lorentzian_t2: l.t2,
                gaussian_linewidth: g.linewidth,
                gaussian_t2: g.t2,
                winner,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ShapeReport { bare_t2, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::ns;
    use approx::assert_relative_eq;

    fn probe(fwhm: f64) -> DeerProbe {
        DeerProbe { inhomogeneous_fwhm: mhz(fwhm), kappa: 0.8, bare: 0.6, ..DeerProbe::reference() }
    }

    #[test]
    fn deer_spectrum_dip_at_resonance() {
        let p = probe(15.7);
        let om = mhz(8.7);
        let t_ss = ns(60.0);
        let carriers: Vec<_> = (0..121).map(|k| mhz(825.3 + k as f64)).collect();
        let s = deer_spectrum(&p, &carriers, t_ss, om).unwrap();
        assert_relative_eq!(s.dip() / (2.0 * PI * 1e6), 885.3, epsilon = 1.0);
        // 60 MHz off resonance only the Lorentzian tail of the spin line is
        // recoupled.
        assert_relative_eq!(s.c[0], p.bare, max_relative = 0.03);
        assert!(s.c.iter().cloned().fold(1.0, f64::min) < 0.8 * p.bare);
        assert!(s.warnings.is_empty() || s.warnings[0].contains("π"));
    }

    #[test]
    fn deer_spectrum_rejects_coarse_grid() {
        let carriers: Vec<_> = (0..5).map(|k| mhz(800.0 + 40.0 * k as f64)).collect();
        assert!(matches!(deer_spectrum(&probe(15.7), &carriers, ns(57.5), mhz(8.7)), Err(Error::Resolution(_))));
    }

    #[test]
    fn deer_rabi_limits() {
        let p = probe(14.9);
        let grid = TimeGrid::new(0.0, ns(5.0), 121).unwrap();
        let curves = deer_rabi(&p, &grid, &[AngularFrequency::ZERO, mhz(48.0)], mhz(8.7)).unwrap();
        for c in &curves {
            assert_relative_eq!(c.c[0], p.bare, max_relative = 1e-12);
        }
        // Δν = 0: first coherence minimum near half a Rabi period (57 ns).
        let mono = &curves[0];
        let kmin = (1..60).min_by(|&a, &b| mono.c[a].total_cmp(&mono.c[b])).unwrap();
        let tmin = mono.grid.at(kmin);
        assert!((tmin - ns(57.5)).abs() < ns(10.0), "tmin {tmin}");
        // Δν = 48 MHz: monotone decrease.
        assert!(curves[1].c.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn rabi_fit_self_inversion() {
        let p = probe(14.9);
        let grid = TimeGrid::new(0.0, ns(5.0), 81).unwrap();
        let curves = deer_rabi(&p, &grid, &[AngularFrequency::ZERO], mhz(8.7)).unwrap();
        let fit = fit_deer_rabi(&curves).unwrap();
        assert_relative_eq!(fit.omega.rad_per_s(), mhz(8.7).rad_per_s(), max_relative = 0.01);
    }

    #[test]
    fn fit_requires_monochromatic_curve() {
        let p = probe(14.9);
        let grid = TimeGrid::new(0.0, ns(5.0), 40).unwrap();
        let curves = deer_rabi(&p, &grid, &[mhz(48.0)], mhz(8.7)).unwrap();
        assert!(fit_deer_rabi(&curves).is_err());
    }

    #[test]
    fn gaussian_limit_kappa_matches_quasi_static() {
        let bath = reference_template(us(10.0)).unwrap();
        let probe = DeerProbe::from_bath(&bath, us(16.0)).unwrap();
        // 2π·40 kHz dominates; quasi-static part 2π·5 kHz·8 µs.
        let a = mhz(0.005).rad_per_s() * us(8.0);
        assert!(probe.kappa > 0.9 * a * a * (-(1.0 / 68.0) * 8.0f64).exp());
        assert!(probe.bare > 0.0 && probe.bare < 1.0);
        assert_relative_eq!(probe.gamma.rad_per_s(), 1.0 / us(0.37), max_relative = 1e-12);
    }

    #[test]
    fn zero_coupling_template_is_unreachable() {
        let mut t = reference_template(us(10.0)).unwrap();
        for c in &mut t.components {
            c.coupling_rms = AngularFrequency::ZERO;
        }
        let r = calibrate_bath(&CalibrationTargets::bare_only(us(33.1)), &t);
        assert!(matches!(r, Err(Error::Unreachable { .. })));
    }

    #[test]
    fn drive_for_cells() {
        assert!(!drive_for(DriveShape::LorentzianStochastic, AngularFrequency::ZERO, mhz(17.0)).is_active());
        assert_eq!(
            drive_for(DriveShape::LorentzianStochastic, mhz(4.9), AngularFrequency::ZERO).shape,
            DriveShape::Monochromatic
        );
    }
}
