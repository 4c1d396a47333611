//! Filter-function coherence: C(τ) = exp[−(1/π)∫₀^∞ S(ω) F(τ,ω) dω] for the
//! Hahn echo, stretched-exponential fits and T2 extraction.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath_analytic::{ComponentModel, NoiseSpectrum};
use crate::error::{Error, Result};
use crate::fit::{least_squares, LsqOptions};
use crate::quadrature::{integrate, integrate_vec, kronrod15, Tolerance};
use crate::search::brent_root;
use crate::units::{log_space, AngularFrequency, BathSpec, DriveSpec};

/// Hahn-echo filter F(τ,ω) = 8/ω²·sin⁴(ωτ/4).
pub fn filter_hahn(tau: f64, omega: f64) -> f64 {
    let x = omega * tau;
    if x.abs() < 1e-3 {
        // sin⁴(x/4) ≈ (x/4)⁴(1 − x²/24)
        return omega * omega * tau.powi(4) / 32.0 * (1.0 - x * x / 24.0);
    }
    let s = (0.25 * x).sin();
    8.0 / (omega * omega) * s.powi(4)
}

/// A noise spectral density S(ω), one-sided on ω ≥ 0.
pub trait SpectralDensity: Sync {
    fn density(&self, omega: f64) -> f64;

    /// Frequency above which S is featureless and decays monotonically.
    fn feature_scale(&self) -> f64;

    /// `(start, step, end)` of a tabulated spectrum; `None` for analytic
    /// forms with unbounded support.
    fn table(&self) -> Option<(f64, f64, f64)> {
        None
    }

    /// Closed-form χ(τ) when one exists.
    fn chi_closed_form(&self, _tau: f64) -> Option<f64> {
        None
    }
}

/// Lorentzian spectrum of an Ornstein–Uhlenbeck field: c²·2Γ/(Γ² + ω²).
#[derive(Debug, Clone, Copy)]
pub struct LorentzianSpectrum {
    pub variance: f64,
    pub gamma: f64,
}

impl SpectralDensity for LorentzianSpectrum {
    fn density(&self, omega: f64) -> f64 {
        self.variance * 2.0 * self.gamma / (self.gamma * self.gamma + omega * omega)
    }

    fn feature_scale(&self) -> f64 {
        self.gamma
    }

    fn chi_closed_form(&self, tau: f64) -> Option<f64> {
        Some(chi_ou(self.variance, self.gamma, tau))
    }
}

/// Flat spectrum S₀.
#[derive(Debug, Clone, Copy)]
pub struct WhiteSpectrum {
    pub s0: f64,
}

impl SpectralDensity for WhiteSpectrum {
    fn density(&self, _omega: f64) -> f64 {
        self.s0
    }

    fn feature_scale(&self) -> f64 {
        0.0
    }

    fn chi_closed_form(&self, tau: f64) -> Option<f64> {
        Some(0.5 * self.s0 * tau)
    }
}

impl SpectralDensity for NoiseSpectrum {
    fn density(&self, omega: f64) -> f64 {
        self.at(omega)
    }

    fn feature_scale(&self) -> f64 {
        self.grid.end()
    }

    fn table(&self) -> Option<(f64, f64, f64)> {
        Some((self.grid.start, self.grid.step, self.grid.end()))
    }
}

/// Spectrum of a whole bath under a drive, from the detuning-averaged modes.
#[derive(Debug, Clone)]
pub struct BathModelSpectrum {
    models: Vec<ComponentModel>,
    scale: f64,
}

impl BathModelSpectrum {
    pub fn new(bath: &BathSpec, drive: &DriveSpec) -> Result<Self> {
        bath.validate()?;
        let models = bath
            .components
            .iter()
            .map(|c| ComponentModel::new(c, drive))
            .collect::<Result<Vec<_>>>()?;
        let scale = bath
            .components
            .iter()
            .map(|c| {
                let active = c.driven && drive.is_active();
                let drive_scale = if active {
                    drive.rabi.rad_per_s() + drive.linewidth.rad_per_s() + c.carrier_offset(drive).abs()
                } else {
                    0.0
                };
                c.gamma_intrinsic.rad_per_s() + drive_scale + if active { 6.0 * c.detuning_sigma() } else { 0.0 }
            })
            .fold(0.0, f64::max);
        Ok(Self { models, scale })
    }
}

impl SpectralDensity for BathModelSpectrum {
    fn density(&self, omega: f64) -> f64 {
        self.models
            .iter()
            .map(|m| m.spectral_density(&[omega]).map(|v| v[0]).unwrap_or(f64::NAN))
            .sum()
    }

    fn feature_scale(&self) -> f64 {
        self.scale
    }

    fn chi_closed_form(&self, tau: f64) -> Option<f64> {
        let mut acc = 0.0;
        for m in &self.models {
            acc += m.chi(&[tau]).ok()?[0];
        }
        Some(acc)
    }
}

/// Closed-form Hahn-echo χ for an OU field of variance c² and rate Γ.
pub fn chi_ou(variance: f64, gamma: f64, tau: f64) -> f64 {
    let x = gamma * tau;
    if x < 1e-2 {
        // Γτ³/12 · (1 − 7x/16 + …) from the series of the closed form.
        let mut sum = 0.0;
        let mut term = x / 6.0;
        for n in 3..30 {
            sum += term * (2f64.powi(2 - n) - 1.0) * if n % 2 == 1 { -1.0 } else { 1.0 };
            term *= x / (n + 1) as f64;
        }
        return variance * tau * tau * sum;
    }
    variance / (gamma * gamma) * (x - 3.0 + 4.0 * (-0.5 * x).exp() - (-x).exp())
}

// Minimum number of filter lobes integrated before switching to the tail.
const MIN_LOBES: usize = 256;
const MAX_LOBES: usize = 20_000;

/// χ(τ) = (1/π)∫₀^∞ S F dω by quadrature, with panels split at the filter
/// zeros 4πk/τ. Returns `(χ, error estimate)`.
pub fn chi_quadrature(spec: &dyn SpectralDensity, tau: f64) -> Result<(f64, f64)> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("echo time must be positive, got {tau}")));
    }
    let lobe = 4.0 * PI / tau;
    let integrand = |w: f64| spec.density(w) * filter_hahn(tau, w) / PI;

    if let Some(table) = spec.table() {
        return chi_tabulated(spec, tau, table, lobe);
    }

    let lobes = ((20.0 * spec.feature_scale() / lobe).ceil() as usize).max(MIN_LOBES);
    if lobes > MAX_LOBES {
        return Err(Error::Resolution(format!(
            "spectral features at {:.3e} rad/s need {lobes} filter lobes at τ = {tau:.3e} s",
            spec.feature_scale()
        )));
    }
    let breaks: Vec<f64> = (0..=lobes).map(|k| k as f64 * lobe).collect();
    let tol = Tolerance { abs: 1e-13, rel: 1e-11, max_intervals: 40 * lobes };
    let body = integrate_vec(|w, out| out[0] = integrand(w), &breaks, 1, tol)?[0];

    // Beyond ω_K the oscillating part of sin⁴ averages out (its leading
    // boundary term vanishes at a filter zero); keep the mean 3/(ω²).
    let wk = breaks[lobes];
    let tail = integrate(|u| if u == 0.0 { 0.0 } else { spec.density(wk / u) }, 0.0, 1.0, Tolerance::default())?
        * 3.0
        / (wk * PI);
    let chi = body + tail;
    if !chi.is_finite() {
        return Err(Error::Quadrature("non-finite spectral density".into()));
    }
    Ok((chi, tol.abs.max(tol.rel * chi.abs())))
}

fn chi_tabulated(
    spec: &dyn SpectralDensity,
    tau: f64,
    (start, step, w_max): (f64, f64, f64),
    lobe: f64,
) -> Result<(f64, f64)> {
    // Cell boundaries: every grid point (S is piecewise linear) and every
    // filter zero (F is smooth between them).
    let mut cuts: Vec<f64> = Vec::new();
    let n_grid = ((w_max - start) / step).round() as usize;
    cuts.extend((0..=n_grid).map(|k| start + k as f64 * step));
    let mut k = (start / lobe).floor() as usize + 1;
    while k as f64 * lobe < w_max {
        cuts.push(k as f64 * lobe);
        k += 1;
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * w_max);

    let mut chi = 0.0;
    let mut err = 0.0;
    for w in cuts.windows(2) {
        let (v, e) = kronrod15(|x| spec.density(x) * filter_hahn(tau, x) / PI, w[0], w[1]);
        chi += v;
        err += e;
    }
    // Tail beyond the table assuming at most a 1/ω² decay of S.
    let tail = spec.density(w_max) / (PI * w_max);
    if tail > 1e-6 * chi.abs() && tail > 1e-12 {
        return Err(Error::Resolution(format!(
            "spectrum truncated at {w_max:.3e} rad/s carries an estimated {tail:.3e} of χ = {chi:.3e}"
        )));
    }
    Ok((chi, err))
}

/// Samples of C(τ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCurve {
    pub tau: Vec<f64>,
    pub c: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

impl CoherenceCurve {
    pub fn from_chi(tau: Vec<f64>, chi: &[f64]) -> Self {
        Self { c: chi.iter().map(|x| (-x).exp()).collect(), tau, stderr: None }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        match &self.stderr {
            None => {
                out.write_record(["tau_s", "c"])?;
                for (t, c) in self.tau.iter().zip(&self.c) {
                    out.write_record([t.to_string(), c.to_string()])?;
                }
            }
            Some(se) => {
                out.write_record(["tau_s", "c", "stderr"])?;
                for ((t, c), s) in self.tau.iter().zip(&self.c).zip(se) {
                    out.write_record([t.to_string(), c.to_string(), s.to_string()])?;
                }
            }
        }
        out.flush()
    }
}

/// C(τ) by quadrature of the overlap integral.
pub fn coherence_from_spectrum(spec: &dyn SpectralDensity, taus: &[f64]) -> Result<CoherenceCurve> {
    let chis = taus
        .par_iter()
        .map(|&t| chi_quadrature(spec, t).map(|(c, _)| c))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoherenceCurve::from_chi(taus.to_vec(), &chis))
}

/// Checks a tabulated spectrum for negative values beyond numerical noise.
pub fn check_nonnegative(spec: &NoiseSpectrum) -> Result<()> {
    let max = spec.s.iter().cloned().fold(0.0, f64::max);
    if let Some(v) = spec.s.iter().find(|&&v| v < -1e-9 * max) {
        return Err(Error::invalid(format!("spectral density has negative value {v:.3e}")));
    }
    Ok(())
}

/// Stretched-exponential fit exp[−(τ/T2)ⁿ].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub t2: f64,
    pub n: f64,
    pub covariance: [[f64; 2]; 2],
    pub rms_residual: f64,
}

/// JSON-friendly summary in µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub t2_us: f64,
    pub n: f64,
    pub t2_err_us: f64,
    pub n_err: f64,
    pub residual: f64,
}

impl FitResult {
    pub fn t2_err(&self) -> f64 {
        self.covariance[0][0].max(0.0).sqrt()
    }

    pub fn n_err(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }

    pub fn summary(&self) -> FitSummary {
        FitSummary {
            t2_us: self.t2 * 1e6,
            n: self.n,
            t2_err_us: self.t2_err() * 1e6,
            n_err: self.n_err(),
            residual: self.rms_residual,
        }
    }
}

const N_MIN: f64 = 0.5;
const N_MAX: f64 = 4.0;

fn n_from(q: f64) -> f64 {
    N_MIN + (N_MAX - N_MIN) / (1.0 + (-q).exp())
}

fn q_from(n: f64) -> f64 {
    let s = ((n - N_MIN) / (N_MAX - N_MIN)).clamp(1e-9, 1.0 - 1e-9);
    (s / (1.0 - s)).ln()
}

/// Weighted least-squares fit of exp[−(τ/T2)ⁿ], n bounded to [0.5, 4],
/// multi-started over n.
pub fn fit_stretched_exp(curve: &CoherenceCurve) -> Result<FitResult> {
    let m = curve.tau.len();
    if m < 6 || curve.c.len() != m {
        return Err(Error::invalid("stretched-exponential fit needs at least 6 points"));
    }
    let cmax = curve.c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cmin = curve.c.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(cmax > 0.9 && cmin < 0.3) {
        return Err(Error::invalid(format!(
            "insufficient decay range: C spans [{cmin:.3}, {cmax:.3}], need > 0.9 and < 0.3"
        )));
    }
    let weights: Vec<f64> = match &curve.stderr {
        Some(se) => {
            let floor = 1e-3;
            se.iter().map(|s| 1.0 / s.max(floor)).collect()
        }
        None => vec![1.0; m],
    };

    // Starting T2: where C crosses 1/e, by log-linear interpolation.
    let target = (-1.0f64).exp();
    let mut t2_guess = curve.tau[m / 2];
    for k in 1..m {
        let (c0, c1) = (curve.c[k - 1], curve.c[k]);
        if (c0 - target) * (c1 - target) <= 0.0 && c0 != c1 {
            let f = (c0 - target) / (c0 - c1);
            t2_guess = (curve.tau[k - 1].ln() * (1.0 - f) + curve.tau[k].ln() * f).exp();
            break;
        }
    }

    let residual = |p: &[f64]| -> Result<Vec<f64>> {
        let (t2, n) = (p[0].exp(), n_from(p[1]));
        Ok(curve
            .tau
            .iter()
            .zip(&curve.c)
            .zip(&weights)
            .map(|((t, c), w)| w * ((-(t / t2).powf(n)).exp() - c))
            .collect())
    };

    let mut best: Option<crate::fit::LsqOutcome> = None;
    for &n0 in &[0.7, 1.0, 1.5, 2.0, 3.0] {
        let Ok(out) = least_squares(residual, &[t2_guess.ln(), q_from(n0)], LsqOptions::default()) else {
            continue;
        };
        if best.as_ref().map_or(true, |b| out.ssr < b.ssr) {
            best = Some(out);
        }
    }
    let best = best.ok_or_else(|| Error::Fit("stretched-exponential fit failed from every start".into()))?;
    let (t2, n) = (best.params[0].exp(), n_from(best.params[1]));
    if !(t2.is_finite() && t2 > 0.0) {
        return Err(Error::Fit(format!("fit produced T2 = {t2}")));
    }
    let s = (n - N_MIN) / (N_MAX - N_MIN);
    let d = [t2, (N_MAX - N_MIN) * s * (1.0 - s)];
    let covariance = match best.covariance() {
        Some(c) => [
            [d[0] * d[0] * c[(0, 0)], d[0] * d[1] * c[(0, 1)]],
            [d[1] * d[0] * c[(1, 0)], d[1] * d[1] * c[(1, 1)]],
        ],
        None => [[f64::NAN; 2]; 2],
    };
    let w_rms = {
        let raw = residual(&best.params)?;
        let plain: f64 = raw.iter().zip(&weights).map(|(r, w)| (r / w).powi(2)).sum();
        (plain / m as f64).sqrt()
    };
    Ok(FitResult { t2, n, covariance, rms_residual: w_rms })
}

/// Total echo χ(τ) of a bath under a drive, from the closed-form per-mode
/// kernels.
pub fn bath_chi(bath: &BathSpec, drive: &DriveSpec, taus: &[f64]) -> Result<Vec<f64>> {
    bath.validate()?;
    let mut total = vec![0.0; taus.len()];
    for comp in &bath.components {
        let model = ComponentModel::new(comp, drive)?;
        for (acc, v) in total.iter_mut().zip(model.chi(taus)?) {
            *acc += v;
        }
    }
    Ok(total)
}

/// Echo time at which χ reaches 1, i.e. C = 1/e.
pub fn t2_guess(bath: &BathSpec, drive: &DriveSpec) -> Result<f64> {
    let chi = |t: f64| -> Result<f64> { Ok(bath_chi(bath, drive, &[t])?[0]) };
    let (mut lo, mut hi) = (1e-6, 1e-6);
    let c0 = chi(lo)?;
    if c0 < 1.0 {
        loop {
            hi *= 2.0;
            if hi > 10.0 {
                return Err(Error::Unreachable {
                    message: "coherence does not decay within 10 s".into(),
                    best_residual: chi(hi / 2.0)?,
                });
            }
            if chi(hi)? >= 1.0 {
                break;
            }
            lo = hi;
        }
    } else {
        loop {
            lo /= 2.0;
            if lo < 1e-12 {
                return Err(Error::Resolution("coherence decays faster than 1 ps".into()));
            }
            if chi(lo)? < 1.0 {
                break;
            }
            hi = lo;
        }
    }
    let x = brent_root(|x| Ok(chi(x.exp())? - 1.0), lo.ln(), hi.ln(), 1e-7)?;
    Ok(x.exp())
}

/// Coherence curve on the automatic T2 window and its stretched-exponential
/// fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub fit: FitResult,
    pub curve: CoherenceCurve,
}

/// Bath + drive → χ(τ) → C(τ) on 16 log-spaced echo times around the 1/e
/// point → stretched-exponential fit.
pub fn t2_pipeline_detailed(bath: &BathSpec, drive: &DriveSpec) -> Result<PipelineOutput> {
    let guess = t2_guess(bath, drive)?;
    let mut window = (0.05, 4.0);
    for attempt in 0..2 {
        let taus = log_space(window.0 * guess, window.1 * guess, 16);
        let chi = bath_chi(bath, drive, &taus)?;
        let curve = CoherenceCurve::from_chi(taus, &chi);
        let first = curve.c[0];
        let last = curve.c[curve.c.len() - 1];
        if (first > 0.9 && last < 0.3) || attempt == 1 {
            let fit = fit_stretched_exp(&curve)?;
            return Ok(PipelineOutput { fit, curve });
        }
        window = (0.005, 8.0);
    }
    unreachable!()
}

pub fn t2_pipeline(bath: &BathSpec, drive: &DriveSpec) -> Result<FitResult> {
    Ok(t2_pipeline_detailed(bath, drive)?.fit)
}

/// Outcome of √(ΓR) ≳ 2π/T2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementCheck {
    pub satisfied: bool,
    /// √(ΓR) − 2π/T2 in rad/s.
    pub margin: f64,
}

pub fn improvement_condition(gamma: AngularFrequency, r: AngularFrequency, t2: f64) -> Result<ImprovementCheck> {
    let (g, rr) = (gamma.rad_per_s(), r.rad_per_s());
    if !(g > 0.0 && rr > 0.0 && t2 > 0.0) {
        return Err(Error::invalid("improvement condition needs positive Γ, R and T2"));
    }
    let margin = (g * rr).sqrt() - 2.0 * PI / t2;
    Ok(ImprovementCheck { satisfied: margin > 0.0, margin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{mhz_to_angular, us, FrequencyGrid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn filter_limits() {
        assert_eq!(filter_hahn(1e-6, 0.0), 0.0);
        let tau = 2e-6;
        let w = 2.0 * PI / tau; // ωτ/4 = π/2
        assert_relative_eq!(filter_hahn(tau, w), 8.0 / (w * w), max_relative = 1e-14);
        // Series and direct branches agree at the switch.
        let w = 0.99e-3 / tau;
        let direct = 8.0 / (w * w) * (0.25 * w * tau).sin().powi(4);
        assert_relative_eq!(filter_hahn(tau, w), direct, max_relative = 1e-9);
    }

    #[test]
    fn white_noise_filter_identity() {
        for &tau in &[us(1.0), us(10.0), us(100.0)] {
            let (chi, _) = chi_quadrature(&WhiteSpectrum { s0: 2.0 }, tau).unwrap();
            assert_relative_eq!(chi, tau, max_relative = 1e-6); // S₀τ/2 with S₀ = 2
        }
    }

    #[test]
    fn ou_quadrature_matches_closed_form() {
        let spec = LorentzianSpectrum { variance: 1e10, gamma: 1e5 };
        for &gt in &[0.01, 0.1, 1.0, 5.0, 20.0] {
            let tau = gt / spec.gamma;
            let (q, _) = chi_quadrature(&spec, tau).unwrap();
            let c = spec.chi_closed_form(tau).unwrap();
            assert_relative_eq!(q, c, max_relative = 1e-6);
        }
    }

    #[test]
    fn chi_ou_series_matches_closed_form_near_switch() {
        let (v, g) = (3.0, 2.0);
        let tau = 0.0099 / g;
        let x: f64 = g * tau;
        let closed = v / (g * g) * (x - 3.0 + 4.0 * (-0.5 * x).exp() - (-x).exp());
        assert_relative_eq!(chi_ou(v, g, tau), closed, max_relative = 1e-8);
        assert_relative_eq!(chi_ou(v, g, 1e-8) / (v * g * 1e-24), 1.0 / 12.0, max_relative = 1e-6);
    }

    #[test]
    fn tabulated_spectrum_matches_analytic() {
        let spec = LorentzianSpectrum { variance: 1e10, gamma: 1e6 };
        let grid = FrequencyGrid::new(0.0, 2e4, 200_001).unwrap();
        let s = grid.points().map(|w| spec.density(w)).collect();
        let table = NoiseSpectrum { grid, s };
        for &tau in &[3e-6, 20e-6] {
            let (q, _) = chi_quadrature(&table, tau).unwrap();
            // Linear interpolation of S on a 2e4 rad/s grid limits agreement.
            assert_relative_eq!(q, spec.chi_closed_form(tau).unwrap(), max_relative = 1e-4);
        }
        // Cutting the table short leaves too much of χ outside it.
        let short = NoiseSpectrum {
            grid: FrequencyGrid::new(0.0, 2e4, 50).unwrap(),
            s: table.s[..50].to_vec(),
        };
        assert!(matches!(chi_quadrature(&short, 3e-6), Err(Error::Resolution(_))));
    }

    #[test]
    fn zero_spectrum_gives_full_coherence() {
        let c = coherence_from_spectrum(&WhiteSpectrum { s0: 0.0 }, &[1e-6, 1e-5]).unwrap();
        assert!(c.c.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn fit_recovers_exponential() {
        let tau = log_space(us(1.0), us(120.0), 12);
        let c = tau.iter().map(|t| (-(t / us(33.1))).exp()).collect();
        let f = fit_stretched_exp(&CoherenceCurve { tau, c, stderr: None }).unwrap();
        assert_relative_eq!(f.t2, us(33.1), max_relative = 1e-6);
        assert!((f.n - 1.0).abs() < 1e-4);
    }

    #[test]
    fn fit_recovers_gaussian_decay() {
        let tau = log_space(us(5.0), us(60.0), 12);
        let c = tau.iter().map(|t| (-(t / us(20.0)).powi(2)).exp()).collect();
        let f = fit_stretched_exp(&CoherenceCurve { tau, c, stderr: None }).unwrap();
        assert!((f.n - 2.0).abs() < 1e-4);
    }

    #[test]
    fn ou_quasi_static_regime_fits_cubic() {
        let (v, g): (f64, f64) = (1e12, 1e2);
        let t2 = (12.0 / (v * g)).cbrt();
        let tau = log_space(0.3 * t2, 2.0 * t2, 12);
        let chi: Vec<f64> = tau.iter().map(|&t| chi_ou(v, g, t)).collect();
        let f = fit_stretched_exp(&CoherenceCurve::from_chi(tau, &chi)).unwrap();
        assert!((f.n - 3.0).abs() < 0.05, "n = {}", f.n);
    }

    #[test]
    fn fit_rejects_short_range() {
        let tau = log_space(1e-6, 2e-6, 8);
        let c = tau.iter().map(|t| (-(t / 1e-3)).exp()).collect();
        assert!(fit_stretched_exp(&CoherenceCurve { tau, c, stderr: None }).unwrap_err().is_input_error());
    }

    #[test]
    fn improvement_condition_examples() {
        let m = |f| mhz_to_angular(f).unwrap();
        let g = m(1.0);
        let edge = improvement_condition(g, g, 2.0 * PI / g.rad_per_s()).unwrap();
        assert!(edge.margin.abs() < 1e-6 * g.rad_per_s());
        let ok = improvement_condition(m(0.03), m(2.76), us(33.1)).unwrap();
        assert!(ok.satisfied);
        assert_relative_eq!(ok.margin, 2.0 * PI * ((0.03f64 * 2.76).sqrt() * 1e6) - 2.0 * PI / us(33.1), max_relative = 1e-12);
        let bad = improvement_condition(m(1e-4), m(1e-4), us(33.1)).unwrap();
        assert!(!bad.satisfied);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn scaling_spectrum_powers_coherence(k in 0.1f64..5.0, gt in 0.05f64..10.0) {
            let base = LorentzianSpectrum { variance: 1e10, gamma: 1e5 };
            let scaled = LorentzianSpectrum { variance: k * 1e10, gamma: 1e5 };
            let tau = [gt / 1e5];
            let c1 = coherence_from_spectrum(&base, &tau).unwrap().c[0];
            let ck = coherence_from_spectrum(&scaled, &tau).unwrap().c[0];
            prop_assert!((ck - c1.powf(k)).abs() < 1e-9);
        }

        #[test]
        fn fit_round_trip(t2_us in 1.0f64..200.0, n in 0.6f64..3.8) {
            let t2 = us(t2_us);
            let tau = log_space(0.01 * t2, 4.0 * t2, 20);
            let c = tau.iter().map(|t| (-(t / t2).powf(n)).exp()).collect();
            let f = fit_stretched_exp(&CoherenceCurve { tau, c, stderr: None }).unwrap();
            prop_assert!((f.t2 / t2 - 1.0).abs() < 0.01);
            prop_assert!((f.n - n).abs() < 0.05);
        }
    }
}
