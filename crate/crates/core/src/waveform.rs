//! Constant-power drive synthesis and ensemble spectral verification.
//!
//! A Lorentzian line of FWHM Δν comes from Wiener phase diffusion with
//! variance rate Δν, whose field autocorrelation is exactly e^{−Δν|t|/2}. A
//! Gaussian line comes from a quasi-static carrier detuning drawn once per
//! realization. Both modulate phase only, so |envelope| never changes.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{least_squares, LsqOptions};
use crate::units::{fwhm_to_sigma, AngularFrequency, DriveShape, DriveSpec, FrequencyGrid, SeedSet, TimeGrid};

pub const PHASE_TAG: &str = "lorentzian-phase";
pub const DETUNING_TAG: &str = "gaussian-detuning";

/// Largest Δν·step for which the phase diffusion is considered resolved.
pub const MAX_DIFFUSION_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub grid: TimeGrid,
    pub phase: Vec<f64>,
}

/// Incremental Wiener phase generator; `gen_lorentzian_phase` and the
/// Monte-Carlo integrator draw the same sequence from the same stream.
pub struct PhaseStream {
    rng: ChaCha8Rng,
    phase: f64,
    scale: f64,
}

impl PhaseStream {
    pub fn new(linewidth: f64, step: f64, seed: &SeedSet, index: u64) -> Self {
        Self { rng: seed.rng(index, PHASE_TAG), phase: 0.0, scale: (linewidth * step).sqrt() }
    }

    /// Current phase, then advance by one step.
    #[inline]
    pub fn next_phase(&mut self) -> f64 {
        let p = self.phase;
        if self.scale > 0.0 {
            let z: f64 = self.rng.sample(StandardNormal);
            self.phase += self.scale * z;
        }
        p
    }
}

pub fn gen_lorentzian_phase(
    linewidth: AngularFrequency,
    grid: &TimeGrid,
    seed: &SeedSet,
    index: u64,
) -> Result<PhaseTrace> {
    let lw = linewidth.rad_per_s();
    if !(lw >= 0.0) {
        return Err(Error::invalid("linewidth must be >= 0"));
    }
    if grid.count == 0 {
        return Err(Error::invalid("phase grid is empty"));
    }
    if lw * grid.step > MAX_DIFFUSION_STEP {
        return Err(Error::Resolution(format!(
            "step·Δν = {:.3} exceeds {MAX_DIFFUSION_STEP}; shorten the step",
            lw * grid.step
        )));
    }
    let mut stream = PhaseStream::new(lw, grid.step, seed, index);
    let phase = (0..grid.count).map(|_| stream.next_phase()).collect();
    Ok(PhaseTrace { grid: *grid, phase })
}

/// One Normal(0, σ²) carrier detuning for a Gaussian-shaped ensemble.
pub fn gen_gaussian_detuning(sigma: AngularFrequency, seed: &SeedSet, index: u64) -> Result<f64> {
    let s = sigma.rad_per_s();
    if !(s >= 0.0) {
        return Err(Error::invalid("detuning sigma must be >= 0"));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    let z: f64 = seed.rng(index, DETUNING_TAG).sample(StandardNormal);
    Ok(s * z)
}

/// Complex envelope Ω·e^{iφ(t)} in the frame rotating at the carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveWaveform {
    pub grid: TimeGrid,
    pub envelope: Vec<Complex64>,
}

impl DriveWaveform {
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_s", "re", "im"])?;
        for (t, z) in self.grid.points().zip(&self.envelope) {
            out.write_record([t.to_string(), z.re.to_string(), z.im.to_string()])?;
        }
        out.flush()
    }

    pub fn mean_power(&self) -> f64 {
        self.envelope.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.envelope.len() as f64
    }
}

/// Step resolving Ω, Δν and the carrier detuning with 50 samples per
/// fastest cycle.
pub fn default_step(spec: &DriveSpec, detuning: f64) -> f64 {
    let fastest = spec.rabi.rad_per_s().max(spec.linewidth.rad_per_s()).max(detuning.abs());
    if fastest > 0.0 {
        0.02 / fastest
    } else {
        1e-9
    }
}

pub fn synth_drive(spec: &DriveSpec, grid: &TimeGrid, seed: &SeedSet, index: u64) -> Result<DriveWaveform> {
    spec.validate()?;
    if grid.count == 0 {
        return Err(Error::invalid("drive grid is empty"));
    }
    if !spec.enabled {
        return Ok(DriveWaveform { grid: *grid, envelope: vec![Complex64::new(0.0, 0.0); grid.count] });
    }
    let (rabi, lw) = (spec.rabi.rad_per_s(), spec.linewidth.rad_per_s());
    let fastest = rabi.max(lw);
    if fastest > 0.0 && grid.step > 0.05 / fastest {
        return Err(Error::Resolution(format!(
            "step {:.3e} s does not resolve max(Ω, Δν) = {fastest:.3e} rad/s (need <= {:.3e} s)",
            grid.step,
            0.05 / fastest
        )));
    }
    let envelope = match spec.shape {
        DriveShape::Monochromatic => vec![Complex64::new(rabi, 0.0); grid.count],
        DriveShape::LorentzianStochastic => gen_lorentzian_phase(spec.linewidth, grid, seed, index)?
            .phase
            .iter()
            .map(|&p| Complex64::from_polar(rabi, p))
            .collect(),
        DriveShape::GaussianStochastic => {
            let sigma = AngularFrequency::new(fwhm_to_sigma(lw))?;
            let d = gen_gaussian_detuning(sigma, seed, index)?;
            grid.points().map(|t| Complex64::from_polar(rabi, d * (t - grid.start))).collect()
        }
    };
    Ok(DriveWaveform { grid: *grid, envelope })
}

/// Ensemble-averaged power spectrum and fitted linewidth.
///
/// `grid` is two-sided, from −π/step upward; `power` integrates to the mean
/// envelope power: Σ power·Δω/(2π) = ⟨|envelope|²⟩.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub grid: FrequencyGrid,
    pub power: Vec<f64>,
    pub fitted_fwhm: AngularFrequency,
    pub fitted_center: f64,
    pub fit_residual: f64,
    pub shape: DriveShape,
}

impl SpectrumEstimate {
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.grid.step / (2.0 * PI)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["omega_rad_s", "power"])?;
        for (om, p) in self.grid.points().zip(&self.power) {
            out.write_record([om.to_string(), p.to_string()])?;
        }
        out.flush()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PeriodogramOptions {
    /// Lineshape fitted to the averaged spectrum. Monochromatic means "report
    /// the half-maximum width without a model fit".
    pub shape: DriveShape,
    /// Welch segment length; `None` uses the whole trace as one segment.
    pub segment_len: Option<usize>,
}

pub fn periodogram(waveforms: &[DriveWaveform], opts: PeriodogramOptions) -> Result<SpectrumEstimate> {
    if waveforms.len() < 8 {
        return Err(Error::invalid(format!("periodogram needs >= 8 realizations, got {}", waveforms.len())));
    }
    let grid = waveforms[0].grid;
    if waveforms.iter().any(|w| w.grid != grid || w.envelope.len() != grid.count) {
        return Err(Error::invalid("waveforms must share one time grid"));
    }
    let n = grid.count;
    let seg = opts.segment_len.unwrap_or(n).min(n);
    if seg < 16 {
        return Err(Error::invalid("periodogram segment shorter than 16 samples"));
    }
    let hop = (seg / 2).max(1);
    let window: Vec<f64> = (0..seg).map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / seg as f64).cos()).collect();
    let wnorm: f64 = window.iter().map(|w| w * w).sum();

    let fft = FftPlanner::new().plan_fft_forward(seg);
    let mut acc = vec![0.0; seg];
    let mut segments = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    for wf in waveforms {
        let mut start = 0;
        while start + seg <= n {
            for k in 0..seg {
                buf[k] = wf.envelope[start + k] * window[k];
            }
            fft.process(&mut buf);
            for (a, z) in acc.iter_mut().zip(&buf) {
                *a += z.norm_sqr();
            }
            segments += 1;
            start += hop;
        }
    }
    // FFT order → ascending frequency starting at −π/step.
    let scale = grid.step / (wnorm * segments as f64);
    let half = seg / 2;
    let power: Vec<f64> = (0..seg).map(|k| acc[(k + seg - half) % seg] * scale).collect();
    let d_omega = 2.0 * PI / (seg as f64 * grid.step);
    let fgrid = FrequencyGrid::new(-(half as f64) * d_omega, d_omega, seg)?;

    let (center, fwhm, residual) = fit_line(&fgrid, &power, opts.shape)?;
    Ok(SpectrumEstimate {
        grid: fgrid,
        power,
        fitted_fwhm: AngularFrequency::new(fwhm)?,
        fitted_center: center,
        fit_residual: residual,
        shape: opts.shape,
    })
}

/// Half-maximum crossings around the peak by linear interpolation.
fn half_max_width(x: &FrequencyGrid, p: &[f64], k0: usize) -> (f64, usize, usize) {
    let h = 0.5 * p[k0];
    let mut lo = k0;
    while lo > 0 && p[lo] > h {
        lo -= 1;
    }
    let mut hi = k0;
    while hi + 1 < p.len() && p[hi] > h {
        hi += 1;
    }
    let cross = |a: usize, b: usize| {
        let (pa, pb) = (p[a], p[b]);
        let f = if pa != pb { (h - pa) / (pb - pa) } else { 0.5 };
        x.at(a) + f * (x.at(b) - x.at(a))
    };
    let left = if lo < k0 { cross(lo, lo + 1) } else { x.at(k0) };
    let right = if hi > k0 { cross(hi - 1, hi) } else { x.at(k0) };
    (right - left, lo, hi)
}

fn fit_line(grid: &FrequencyGrid, p: &[f64], shape: DriveShape) -> Result<(f64, f64, f64)> {
    let (k0, &pmax) = p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::invalid("empty spectrum"))?;
    if !(pmax > 0.0) {
        return Err(Error::Fit("spectrum has no power".into()));
    }
    let (w_est, lo, hi) = half_max_width(grid, p, k0);
    if shape == DriveShape::Monochromatic || hi - lo < 7 {
        return Ok((grid.at(k0), w_est.max(grid.step), 0.0));
    }
    // Fit within ±2.5 estimated widths of the peak.
    let reach = (2.5 * w_est / grid.step).ceil() as usize;
    let a = k0.saturating_sub(reach);
    let b = (k0 + reach).min(p.len() - 1);
    let xs: Vec<f64> = (a..=b).map(|k| grid.at(k)).collect();
    let ys: Vec<f64> = p[a..=b].iter().map(|v| v / pmax).collect();
    let x0 = grid.at(k0);
    let model = move |q: &[f64], x: f64| -> f64 {
        let (amp, c, w) = (q[0], x0 + q[1] * w_est, w_est * q[2].exp());
        match shape {
            DriveShape::GaussianStochastic => {
                let s = fwhm_to_sigma(w);
                amp * (-0.5 * ((x - c) / s).powi(2)).exp()
            }
            _ => {
                let hw = 0.5 * w;
                amp * hw * hw / ((x - c).powi(2) + hw * hw)
            }
        }
    };
    let out = least_squares(
        |q| Ok(xs.iter().zip(&ys).map(|(&x, &y)| model(q, x) - y).collect()),
        &[1.0, 0.0, 0.0],
        LsqOptions::default(),
    )?;
    let q = &out.params;
    Ok((x0 + q[1] * w_est, w_est * q[2].exp(), out.rms()))
}
