//! Monte-Carlo bath: individual classical spins under synthesized drives.
//!
//! Each spin is a unit vector drawn isotropically and the qubit sees
//! B = √3 Σ cᵢ s_z,i. The √3 restores ⟨B²⟩ = Σ cᵢ², and isotropy makes the
//! ensemble stationary under any rotation, which is what an infinite-
//! temperature spin-½ bath looks like at the level of second moments.
//! Relaxation flips the whole vector (s → −s) at Poisson rate Γ/2, so
//! ⟨s(t)·s(0)⟩ decays as e^{−Γt}.
//!
//! While driven, a spin is integrated in the frame of its own drive waveform:
//! the field (Ω, 0, Δ) is constant there and each step is an exact rotation;
//! Lorentzian phase diffusion enters as a z-rotation kick at every step
//! boundary, drawn from the same stream `synth_drive` uses. Undriven
//! stretches are event-driven because only flips change s_z.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::bath_analytic::CorrelationTrace;
use crate::coherence::CoherenceCurve;
use crate::error::{Error, Result};
use crate::units::{fwhm_to_sigma, AngularFrequency, BathComponent, BathSpec, DriveShape, DriveSpec, SeedSet, TimeGrid};
use crate::waveform::{gen_gaussian_detuning, PhaseStream};

pub const SPIN_TAG: &str = "mc-spin";
const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    /// Spins per bath component.
    pub n_spins: usize,
    pub n_realizations: usize,
    pub integrator_step: f64,
    pub seed: SeedSet,
}

impl MCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_spins < 1 {
            return Err(Error::invalid("MC needs at least one spin per component"));
        }
        if self.n_realizations < 8 {
            return Err(Error::invalid(format!("MC needs >= 8 realizations, got {}", self.n_realizations)));
        }
        if !(self.integrator_step > 0.0 && self.integrator_step.is_finite()) {
            return Err(Error::invalid("integrator step must be positive"));
        }
        Ok(())
    }

    /// The step must give 20 samples per fastest of Ω, Δν and the detuning
    /// spread of every spin the drive reaches.
    pub fn check_resolves(&self, bath: &BathSpec, drive: &DriveSpec) -> Result<()> {
        if !drive.is_active() {
            return Ok(());
        }
        let mut fastest = drive.rabi.rad_per_s().max(drive.linewidth.rad_per_s());
        for c in bath.components.iter().filter(|c| c.driven) {
            fastest = fastest.max(c.detuning_sigma());
        }
        if self.integrator_step * fastest > 0.05 {
            return Err(Error::Resolution(format!(
                "integrator step {:.3e} s exceeds 0.05/{fastest:.3e} rad/s",
                self.integrator_step
            )));
        }
        Ok(())
    }
}

/// Instantaneous qubit frequency shift B(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTrace {
    pub grid: TimeGrid,
    pub b: Vec<f64>,
}

impl FieldTrace {
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_s", "b_rad_s"])?;
        for (t, b) in self.grid.points().zip(&self.b) {
            out.write_record([t.to_string(), b.to_string()])?;
        }
        out.flush()
    }
}

/// Intervals during which the drive is on. Empty means undriven.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DriveSchedule {
    pub windows: Vec<(f64, f64)>,
}

impl DriveSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn continuous(duration: f64) -> Self {
        Self { windows: vec![(0.0, duration)] }
    }

    pub fn validate(&self) -> Result<()> {
        let mut last = 0.0;
        for &(a, b) in &self.windows {
            if !(a >= last && b > a && b.is_finite()) {
                return Err(Error::invalid("drive windows must be ordered, disjoint and start at t >= 0"));
            }
            last = b;
        }
        Ok(())
    }
}

/// A drive burst applied to the bath inside the echo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathPulse {
    /// Start relative to the qubit π pulse.
    pub delay: f64,
    pub duration: f64,
    /// Carrier is the pulse frequency f_ss; linewidth zero means a
    /// rectangular monochromatic pulse.
    pub drive: DriveSpec,
}

/// Hahn echo with the qubit π pulse at τ/2, optionally with the bath drive
/// on for all of [0, τ] or with a single bath pulse after the qubit π.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub taus: Vec<f64>,
    pub continuous_drive: bool,
    pub bath_pulse: Option<BathPulse>,
}

impl PulseSchedule {
    pub fn hahn(taus: Vec<f64>, continuous_drive: bool) -> Self {
        Self { taus, continuous_drive, bath_pulse: None }
    }

    pub fn deer(taus: Vec<f64>, pulse: BathPulse) -> Self {
        Self { taus, continuous_drive: false, bath_pulse: Some(pulse) }
    }

    pub fn validate(&self, step: f64) -> Result<()> {
        if self.taus.is_empty() {
            return Err(Error::invalid("echo schedule has no τ values"));
        }
        if self.continuous_drive && self.bath_pulse.is_some() {
            return Err(Error::invalid("bath pulse and continuous drive are mutually exclusive"));
        }
        for &tau in &self.taus {
            if !(tau >= 4.0 * step && tau.is_finite()) {
                return Err(Error::invalid(format!("τ = {tau:.3e} s is not resolved by step {step:.3e} s")));
            }
            if let Some(p) = &self.bath_pulse {
                if !(p.delay >= 0.0 && p.duration >= 0.0 && 0.5 * tau + p.delay + p.duration <= tau) {
                    return Err(Error::invalid(format!("bath pulse does not fit inside τ = {tau:.3e} s")));
                }
            }
        }
        if let Some(p) = &self.bath_pulse {
            p.drive.validate()?;
        }
        Ok(())
    }
}

/// Exact rotation about h for time t, with the z-row of ∫R so that
/// ∫₀ᵗ s_z = q·s(0).
#[derive(Debug, Clone, Copy)]
struct Rotor {
    r: [[f64; 3]; 3],
    q: [f64; 3],
}

impl Rotor {
    fn new(h: [f64; 3], t: f64) -> Self {
        let w = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
        let theta = w * t;
        if theta == 0.0 {
            return Self { r: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], q: [0.0, 0.0, t] };
        }
        let k = [h[0] / w, h[1] / w, h[2] / w];
        let (s, c) = theta.sin_cos();
        let omc = 2.0 * (0.5 * theta).sin().powi(2);
        // t − sin(θ)/w loses everything to cancellation for small θ.
        let rem = if theta.abs() < 1e-3 {
            t * theta * theta / 6.0 * (1.0 - theta * theta / 20.0)
        } else {
            t - s / w
        };
        let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = s * kx[i][j] + omc * k[i] * k[j] + if i == j { c } else { 0.0 };
            }
        }
        let mut q = [0.0; 3];
        for j in 0..3 {
            q[j] = (omc / w) * kx[2][j] + rem * k[2] * k[j] + if j == 2 { s / w } else { 0.0 };
        }
        Self { r, q }
    }

    /// Returns ∫ s_z over the interval and advances s.
    #[inline]
    fn apply(&self, s: &mut [f64; 3]) -> f64 {
        let int = self.q[0] * s[0] + self.q[1] * s[1] + self.q[2] * s[2];
        let v = *s;
        for i in 0..3 {
            s[i] = self.r[i][0] * v[0] + self.r[i][1] * v[1] + self.r[i][2] * v[2];
        }
        int
    }
}

struct Window {
    start: f64,
    end: f64,
    drive: DriveSpec,
}

struct Driven {
    origin: f64,
    next: u64,
    h: [f64; 3],
    full: Rotor,
    kicks: Option<(PhaseStream, f64)>,
}

struct Spin<'a> {
    s: [f64; 3],
    detuning: f64,
    rate: f64,
    next_flip: f64,
    rng: ChaCha8Rng,
    component: &'a BathComponent,
    step: f64,
    seed: SeedSet,
    id: u64,
}

impl Spin<'_> {
    fn draw_flip(&mut self, t: f64) {
        self.next_flip = if self.rate > 0.0 {
            let e: f64 = self.rng.sample(Exp1);
            t + e / self.rate
        } else {
            f64::INFINITY
        };
    }

    fn flip(&mut self) {
        self.s = [-self.s[0], -self.s[1], -self.s[2]];
        let t = self.next_flip;
        self.draw_flip(t);
    }

    fn undriven(&mut self, mut t: f64, end: f64) -> f64 {
        // Precession about z leaves s_z alone, and the isotropic ensemble is
        // invariant under it, so the transverse part is not tracked here.
        let mut int = 0.0;
        while self.next_flip < end {
            int += self.s[2] * (self.next_flip - t);
            t = self.next_flip;
            self.flip();
        }
        int + self.s[2] * (end - t)
    }

    fn enter(&self, w: &Window, index: usize) -> Result<Option<Driven>> {
        let d = &w.drive;
        if !(self.component.driven && d.is_active()) {
            return Ok(None);
        }
        let stream = self.id.wrapping_mul(256).wrapping_add(index as u64);
        let mut delta = self.detuning - self.component.carrier_offset(d);
        let mut kicks = None;
        match d.shape {
            DriveShape::Monochromatic => {}
            DriveShape::LorentzianStochastic => {
                let mut ps = PhaseStream::new(d.linewidth.rad_per_s(), self.step, &self.seed, stream);
                let p0 = ps.next_phase();
                kicks = Some((ps, p0));
            }
            DriveShape::GaussianStochastic => {
                let sigma = AngularFrequency::new(fwhm_to_sigma(d.linewidth.rad_per_s()))?;
                delta -= gen_gaussian_detuning(sigma, &self.seed, stream)?;
            }
        }
        let h = [d.rabi.rad_per_s(), 0.0, delta];
        Ok(Some(Driven { origin: w.start, next: 1, h, full: Rotor::new(h, self.step), kicks }))
    }

    fn driven(&mut self, st: &mut Driven, mut t: f64, end: f64) -> f64 {
        let mut int = 0.0;
        while t < end {
            let boundary = st.origin + self.step * st.next as f64;
            let stop = boundary.min(end).min(self.next_flip);
            let whole = stop == boundary && t == st.origin + self.step * (st.next - 1) as f64;
            int += if whole { st.full.apply(&mut self.s) } else { Rotor::new(st.h, stop - t).apply(&mut self.s) };
            t = stop;
            if t == self.next_flip {
                self.flip();
            }
            if t == boundary {
                st.next += 1;
                if let Some((ps, last)) = st.kicks.as_mut() {
                    let p = ps.next_phase();
                    let (sn, cs) = (p - *last).sin_cos();
                    *last = p;
                    let (x, y) = (self.s[0], self.s[1]);
                    self.s[0] = x * cs + y * sn;
                    self.s[1] = -x * sn + y * cs;
                }
            }
        }
        int
    }

    /// Walks to each checkpoint in turn, returning (∫₀ s_z, s_z) there.
    fn run(&mut self, windows: &[Window], checkpoints: &[f64]) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut t = 0.0;
        let mut int = 0.0;
        let mut wi = 0;
        let mut state: Option<Driven> = None;
        for &cp in checkpoints {
            while t < cp {
                while wi < windows.len() && windows[wi].end <= t {
                    wi += 1;
                    state = None;
                }
                match windows.get(wi) {
                    Some(w) if w.start <= t => {
                        if state.is_none() {
                            state = self.enter(w, wi)?;
                        }
                        let stop = cp.min(w.end);
                        int += match state.as_mut() {
                            Some(st) => self.driven(st, t, stop),
                            None => self.undriven(t, stop),
                        };
                        t = stop;
                    }
                    other => {
                        let stop = other.map_or(cp, |w| cp.min(w.start));
                        int += self.undriven(t, stop);
                        t = stop;
                    }
                }
            }
            out.push((int, self.s[2]));
        }
        Ok(out)
    }
}

fn spawn<'a>(component: &'a BathComponent, cfg: &MCConfig, id: u64) -> (Spin<'a>, f64) {
    let mut rng = cfg.seed.rng(id, SPIN_TAG);
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let az: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let rho = (1.0 - z * z).max(0.0).sqrt();
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let x: f64 = rng.sample(StandardNormal);
    let coupling = sign * SQRT3 * component.coupling_rms.rad_per_s() / (cfg.n_spins as f64).sqrt();
    let mut spin = Spin {
        s: [rho * az.cos(), rho * az.sin(), z],
        detuning: x * component.detuning_sigma(),
        rate: 0.5 * component.gamma_intrinsic.rad_per_s(),
        next_flip: 0.0,
        rng,
        component,
        step: cfg.integrator_step,
        seed: cfg.seed,
        id,
    };
    spin.draw_flip(0.0);
    (spin, coupling)
}

/// Σ over the bath of coupling × (∫ s_z, s_z) at each checkpoint, for one
/// realization.
fn realization(
    bath: &BathSpec,
    cfg: &MCConfig,
    r: usize,
    windows: &[Window],
    checkpoints: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut acc = vec![(0.0, 0.0); checkpoints.len()];
    let per_real = (bath.components.len() * cfg.n_spins) as u64;
    for (ci, comp) in bath.components.iter().enumerate() {
        if comp.coupling_rms.rad_per_s() == 0.0 {
            continue;
        }
        for j in 0..cfg.n_spins {
            let id = r as u64 * per_real + (ci * cfg.n_spins + j) as u64;
            let (mut spin, c) = spawn(comp, cfg, id);
            for (a, (int, sz)) in acc.iter_mut().zip(spin.run(windows, checkpoints)?) {
                a.0 += c * int;
                a.1 += c * sz;
            }
        }
    }
    Ok(acc)
}

fn check_inputs(bath: &BathSpec, drive: &DriveSpec, cfg: &MCConfig) -> Result<()> {
    // A silent bath is legal here: it is the trivial C ≡ 1 case.
    bath.validate_components()?;
    drive.validate()?;
    cfg.validate()?;
    cfg.check_resolves(bath, drive)
}

/// One B(t) trace per realization on the integrator grid over [0, duration].
pub fn simulate_bath(
    bath: &BathSpec,
    drive: &DriveSpec,
    cfg: &MCConfig,
    duration: f64,
    schedule: &DriveSchedule,
) -> Result<Vec<FieldTrace>> {
    check_inputs(bath, drive, cfg)?;
    schedule.validate()?;
    let grid = TimeGrid::covering(duration, cfg.integrator_step)?;
    let checkpoints: Vec<f64> = grid.points().collect();
    let windows: Vec<Window> =
        schedule.windows.iter().map(|&(start, end)| Window { start, end, drive: *drive }).collect();
    (0..cfg.n_realizations)
        .into_par_iter()
        .map(|r| {
            let acc = realization(bath, cfg, r, &windows, &checkpoints)?;
            Ok(FieldTrace { grid, b: acc.into_iter().map(|(_, b)| b).collect() })
        })
        .collect()
}

/// Time-and-ensemble-averaged autocorrelation of B, normalized at zero lag,
/// for lags up to half the trace length. Lag k averages over the n − k
/// available pairs; the standard error comes from the spread across traces.
pub fn estimate_correlation(traces: &[FieldTrace]) -> Result<CorrelationTrace> {
    if traces.len() < 8 {
        return Err(Error::invalid(format!("need >= 8 traces, got {}", traces.len())));
    }
    let grid = traces[0].grid;
    if traces.iter().any(|t| t.grid != grid || t.b.len() != grid.count) {
        return Err(Error::invalid("traces must share one grid"));
    }
    let n = grid.count;
    let lags = n / 2 + 1;
    let m = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::new();
    let (fwd, inv) = (planner.plan_fft_forward(m), planner.plan_fft_inverse(m));
    let per_trace: Vec<Vec<f64>> = traces
        .iter()
        .map(|tr| {
            let mut buf: Vec<Complex64> = tr.b.iter().map(|&b| Complex64::new(b, 0.0)).collect();
            buf.resize(m, Complex64::new(0.0, 0.0));
            fwd.process(&mut buf);
            for z in buf.iter_mut() {
                *z = Complex64::new(z.norm_sqr(), 0.0);
            }
            inv.process(&mut buf);
            (0..lags).map(|k| buf[k].re / (m * (n - k)) as f64).collect()
        })
        .collect();
    let nt = traces.len() as f64;
    let mut mean = vec![0.0; lags];
    let mut se = vec![0.0; lags];
    let mut col = vec![0.0; traces.len()];
    for k in 0..lags {
        for (c, p) in col.iter_mut().zip(&per_trace) {
            *c = p[k];
        }
        let mu = pairwise_sum(&col) / nt;
        let var = col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nt - 1.0);
        mean[k] = mu;
        se[k] = (var / nt).sqrt();
    }
    let c0 = mean[0];
    if !(c0 > 0.0) {
        return Err(Error::invalid("traces carry no power"));
    }
    let g = mean.iter().map(|m| m / c0).collect();
    let mut stderr: Vec<f64> = se.iter().map(|s| s / c0).collect();
    stderr[0] = 0.0;
    Ok(CorrelationTrace { grid: TimeGrid::new(0.0, grid.step, lags.max(2))?, g, variance: c0, stderr: Some(stderr) })
}

/// Echo phases φ = ∫ y(t)B(t) dt, indexed `[τ][realization]`.
pub fn echo_phases_mc(
    bath: &BathSpec,
    drive: &DriveSpec,
    cfg: &MCConfig,
    schedule: &PulseSchedule,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(bath, drive, cfg)?;
    schedule.validate(cfg.integrator_step)?;
    if let Some(p) = &schedule.bath_pulse {
        cfg.check_resolves(bath, &p.drive)?;
        // Each τ places the pulse differently, so each is its own run.
        let per_tau: Vec<Vec<f64>> = schedule
            .taus
            .iter()
            .map(|&tau| {
                let start = 0.5 * tau + p.delay;
                let windows = if p.duration > 0.0 {
                    vec![Window { start, end: start + p.duration, drive: p.drive }]
                } else {
                    Vec::new()
                };
                let cps = [0.5 * tau, tau];
                (0..cfg.n_realizations)
                    .into_par_iter()
                    .map(|r| {
                        let acc = realization(bath, cfg, r, &windows, &cps)?;
                        Ok(2.0 * acc[0].0 - acc[1].0)
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        return Ok(per_tau);
    }
    let mut cps: Vec<f64> = schedule.taus.iter().flat_map(|&t| [0.5 * t, t]).collect();
    cps.sort_by(f64::total_cmp);
    cps.dedup();
    let t_max = *cps.last().expect("non-empty");
    let windows =
        if schedule.continuous_drive { vec![Window { start: 0.0, end: t_max, drive: *drive }] } else { Vec::new() };
    let runs: Vec<Vec<(f64, f64)>> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|r| realization(bath, cfg, r, &windows, &cps))
        .collect::<Result<_>>()?;
    let at = |t: f64| cps.binary_search_by(|x| x.total_cmp(&t)).expect("checkpoint present");
    Ok(schedule
        .taus
        .iter()
        .map(|&tau| {
            let (h, e) = (at(0.5 * tau), at(tau));
            runs.iter().map(|run| 2.0 * run[h].0 - run[e].0).collect()
        })
        .collect())
}

/// C(τ) = ⟨cos φ⟩ with its standard error.
pub fn echo_coherence_mc(
    bath: &BathSpec,
    drive: &DriveSpec,
    cfg: &MCConfig,
    schedule: &PulseSchedule,
) -> Result<CoherenceCurve> {
    let phases = echo_phases_mc(bath, drive, cfg, schedule)?;
    let mut c = Vec::with_capacity(phases.len());
    let mut se = Vec::with_capacity(phases.len());
    for ph in &phases {
        let (mean, err) = mean_and_stderr(&ph.iter().map(|p| p.cos()).collect::<Vec<_>>());
        c.push(mean);
        se.push(err);
    }
    Ok(CoherenceCurve { tau: schedule.taus.clone(), c, stderr: Some(se) })
}

/// Sample mean and its standard error, summed in a fixed pairwise order.
pub fn mean_and_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mu = pairwise_sum(x) / n;
    if x.len() < 2 {
        return (mu, f64::NAN);
    }
    let dev: Vec<f64> = x.iter().map(|v| (v - mu).powi(2)).collect();
    (mu, (pairwise_sum(&dev) / (n - 1.0) / n).sqrt())
}

pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        x.iter().sum()
    } else {
        let (a, b) = x.split_at(x.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}
