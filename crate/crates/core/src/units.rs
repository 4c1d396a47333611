//! Units, grids, seeds and the domain types shared by every other module.
//!
//! Every frequency inside the crate is angular (rad/s) and every time is in
//! seconds. User-facing values are linear MHz and µs; the conversions live
//! here and nowhere else.

use std::f64::consts::{LN_2, TAU};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gyromagnetic constant calibrated on the observed bath resonance:
/// 885.3 MHz at 315 G.
pub const BATH_MHZ_PER_GAUSS: f64 = 885.3 / 315.0;

/// Ratio between the FWHM and the standard deviation of a Gaussian.
pub const GAUSSIAN_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Angular frequency in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngularFrequency(f64);

impl AngularFrequency {
    pub const ZERO: AngularFrequency = AngularFrequency(0.0);

    pub fn new(rad_per_s: f64) -> Result<Self> {
        if !rad_per_s.is_finite() {
            return Err(Error::invalid(format!("angular frequency must be finite, got {rad_per_s}")));
        }
        Ok(Self(rad_per_s))
    }

    /// From a linear frequency in MHz.
    pub fn from_mhz(f: f64) -> Result<Self> {
        mhz_to_angular(f)
    }

    /// From an inverse correlation time `1/tau_c`.
    pub fn from_correlation_time(tau_c: f64) -> Result<Self> {
        if !(tau_c > 0.0 && tau_c.is_finite()) {
            return Err(Error::invalid(format!("correlation time must be positive, got {tau_c}")));
        }
        Ok(Self(1.0 / tau_c))
    }

    #[inline]
    pub fn rad_per_s(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn mhz(self) -> f64 {
        angular_to_mhz(self)
    }
}

impl fmt::Display for AngularFrequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "2π·{:.6} MHz", self.mhz())
    }
}

/// Linear MHz to angular frequency: `2π·f·10⁶` rad/s.
pub fn mhz_to_angular(f: f64) -> Result<AngularFrequency> {
    if !f.is_finite() {
        return Err(Error::invalid(format!("frequency must be finite, got {f} MHz")));
    }
    Ok(AngularFrequency(TAU * f * 1e6))
}

pub fn angular_to_mhz(w: AngularFrequency) -> f64 {
    w.0 / TAU / 1e6
}

/// Bath spin Larmor frequency for a static field `b0` in gauss.
pub fn larmor_frequency(b0: f64) -> Result<AngularFrequency> {
    if !(b0 > 0.0 && b0.is_finite()) {
        return Err(Error::invalid(format!("static field must be positive, got {b0} G")));
    }
    mhz_to_angular(BATH_MHZ_PER_GAUSS * b0)
}

/// Microseconds to seconds.
#[inline]
pub fn us(x: f64) -> f64 {
    x * 1e-6
}

/// Nanoseconds to seconds.
#[inline]
pub fn ns(x: f64) -> f64 {
    x * 1e-9
}

/// Converts a FWHM into the standard deviation of a Gaussian.
#[inline]
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * LN_2).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveShape {
    Monochromatic,
    LorentzianStochastic,
    GaussianStochastic,
}

impl DriveShape {
    pub fn name(self) -> &'static str {
        match self {
            DriveShape::Monochromatic => "monochromatic",
            DriveShape::LorentzianStochastic => "lorentzian",
            DriveShape::GaussianStochastic => "gaussian",
        }
    }
}

/// A constant-amplitude drive applied to the bath.
///
/// `linewidth` is the FWHM of the drive field spectrum. A monochromatic drive
/// has zero linewidth and stochastic shapes have a positive one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub shape: DriveShape,
    pub rabi: AngularFrequency,
    pub linewidth: AngularFrequency,
    pub carrier: AngularFrequency,
    pub enabled: bool,
}

impl DriveSpec {
    pub fn off() -> Self {
        Self {
            shape: DriveShape::Monochromatic,
            rabi: AngularFrequency::ZERO,
            linewidth: AngularFrequency::ZERO,
            carrier: AngularFrequency::ZERO,
            enabled: false,
        }
    }

    pub fn monochromatic(rabi: AngularFrequency) -> Self {
        Self { shape: DriveShape::Monochromatic, rabi, enabled: true, ..Self::off() }
    }

    pub fn lorentzian(rabi: AngularFrequency, linewidth: AngularFrequency) -> Self {
        Self { shape: DriveShape::LorentzianStochastic, rabi, linewidth, enabled: true, ..Self::off() }
    }

    pub fn gaussian(rabi: AngularFrequency, linewidth: AngularFrequency) -> Self {
        Self { shape: DriveShape::GaussianStochastic, rabi, linewidth, enabled: true, ..Self::off() }
    }

    /// Builds a drive of the given shape, falling back to monochromatic when
    /// the linewidth is zero.
    pub fn with_shape(shape: DriveShape, rabi: AngularFrequency, linewidth: AngularFrequency) -> Self {
        if linewidth.rad_per_s() == 0.0 {
            return Self::monochromatic(rabi);
        }
        match shape {
            DriveShape::Monochromatic => Self::monochromatic(rabi),
            DriveShape::LorentzianStochastic => Self::lorentzian(rabi, linewidth),
            DriveShape::GaussianStochastic => Self::gaussian(rabi, linewidth),
        }
    }

    pub fn with_carrier(mut self, carrier: AngularFrequency) -> Self {
        self.carrier = carrier;
        self
    }

    /// True if the drive actually moves bath spins.
    pub fn is_active(&self) -> bool {
        self.enabled && self.rabi.rad_per_s() > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let (rabi, lw) = (self.rabi.rad_per_s(), self.linewidth.rad_per_s());
        if !(rabi >= 0.0) || !rabi.is_finite() {
            return Err(Error::invalid(format!("rabi frequency must be >= 0, got {rabi}")));
        }
        if !(lw >= 0.0) || !lw.is_finite() {
            return Err(Error::invalid(format!("linewidth must be >= 0, got {lw}")));
        }
        match (self.shape, lw == 0.0) {
            (DriveShape::Monochromatic, false) => {
                Err(Error::invalid("monochromatic drive must have zero linewidth"))
            }
            (DriveShape::LorentzianStochastic | DriveShape::GaussianStochastic, true) => Err(
                Error::invalid(format!("{} drive needs a positive linewidth", self.shape.name())),
            ),
            _ => Ok(()),
        }
    }
}

/// One class of bath spins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathComponent {
    /// Intrinsic relaxation rate Γ (inverse correlation time).
    pub gamma_intrinsic: AngularFrequency,
    /// FWHM of the Gaussian distribution of spin detunings.
    pub inhomogeneous_fwhm: AngularFrequency,
    /// rms qubit frequency shift produced by the component.
    pub coupling_rms: AngularFrequency,
    /// Centre of the spin resonance.
    pub resonance: AngularFrequency,
    pub driven: bool,
}

impl BathComponent {
    pub fn variance(&self) -> f64 {
        self.coupling_rms.rad_per_s().powi(2)
    }

    /// Standard deviation of the detuning distribution.
    pub fn detuning_sigma(&self) -> f64 {
        fwhm_to_sigma(self.inhomogeneous_fwhm.rad_per_s())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma_intrinsic", self.gamma_intrinsic),
            ("inhomogeneous_fwhm", self.inhomogeneous_fwhm),
            ("coupling_rms", self.coupling_rms),
            ("resonance", self.resonance),
        ] {
            let x = v.rad_per_s();
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::invalid(format!("bath component {name} must be >= 0, got {x}")));
            }
        }
        Ok(())
    }

    /// Detuning of the drive carrier from this component's resonance. A zero
    /// carrier means "on resonance".
    pub fn carrier_offset(&self, drive: &DriveSpec) -> f64 {
        if drive.carrier.rad_per_s() == 0.0 {
            0.0
        } else {
            drive.carrier.rad_per_s() - self.resonance.rad_per_s()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub components: Vec<BathComponent>,
}

impl BathSpec {
    pub fn new(components: Vec<BathComponent>) -> Result<Self> {
        let bath = Self { components };
        bath.validate()?;
        Ok(bath)
    }

    /// Non-empty with valid components; a silent (zero-variance) bath passes.
    pub fn validate_components(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::invalid("bath needs at least one component"));
        }
        self.components.iter().try_for_each(BathComponent::validate)
    }

    pub fn total_variance(&self) -> f64 {
        self.components.iter().map(BathComponent::variance).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_components()?;
        if !(self.total_variance() > 0.0) {
            return Err(Error::invalid("bath has zero total coupling variance"));
        }
        Ok(())
    }
}

/// Deterministic random streams.
///
/// The stream for `(master_seed, index, tag)` is a ChaCha8 generator whose
/// 256-bit key is four SplitMix64 outputs seeded with
/// `master_seed ^ fnv1a64(tag)`, and whose stream number is `index`. Distinct
/// indices therefore select non-overlapping ChaCha streams under one key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub master_seed: u64,
}

impl SeedSet {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn rng(&self, index: u64, tag: &str) -> ChaCha8Rng {
        let mut state = self.master_seed ^ fnv1a64(tag.as_bytes());
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Uniform time grid in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl TimeGrid {
    pub fn new(start: f64, step: f64, count: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid(format!("grid step must be positive, got {step}")));
        }
        if count < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 points, got {count}")));
        }
        if !start.is_finite() {
            return Err(Error::invalid("grid start must be finite"));
        }
        Ok(Self { start, step, count })
    }

    /// Grid starting at zero and covering at least `duration`.
    pub fn covering(duration: f64, step: f64) -> Result<Self> {
        let count = (duration / step).ceil() as usize + 1;
        Self::new(0.0, step, count.max(2))
    }

    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        self.start + self.step * k as f64
    }

    pub fn end(&self) -> f64 {
        self.at(self.count - 1)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |k| self.at(k))
    }
}

/// Uniform angular-frequency grid in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl FrequencyGrid {
    pub fn new(start: f64, step: f64, count: usize) -> Result<Self> {
        let g = TimeGrid::new(start, step, count)?;
        Ok(Self { start: g.start, step: g.step, count: g.count })
    }

    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        self.start + self.step * k as f64
    }

    pub fn end(&self) -> f64 {
        self.at(self.count - 1)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |k| self.at(k))
    }
}

/// `n` log-spaced values between `lo` and `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}
