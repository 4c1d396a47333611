//! Driven, dephasing Bloch dynamics of a single bath spin in the drive frame.
//!
//! With detuning δ, Rabi frequency Ω and drive-phase diffusion rate a (half
//! the Lorentzian linewidth), the transverse/longitudinal components obey
//! ds/dt = M s with
//!
//! ```text
//!     [ -a  -δ   0 ]
//! M = [  δ  -a  -Ω ]
//!     [  0   Ω   0 ]
//! ```
//!
//! Only the zz element of exp(Mt) is needed for the bath correlation. Its
//! Laplace transform is ((s+a)² + δ²) / q(s) with
//! q(s) = s³ + 2a s² + (a² + Ω² + δ²) s + a Ω², so it is a sum of three
//! exponentials whose rates are the roots of q.

use nalgebra::Matrix3;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// One exponential term A·e^{μt} of a correlation function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub amplitude: Complex64,
    pub rate: Complex64,
}

impl Mode {
    pub fn real(amplitude: f64, rate: f64) -> Self {
        Self { amplitude: Complex64::new(amplitude, 0.0), rate: Complex64::new(rate, 0.0) }
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        (self.amplitude * (self.rate * t).exp()).re
    }
}

/// Up to three modes of [exp(Mt)]_zz. Complex modes come in conjugate pairs
/// and both members are stored, so sums of `Mode::at` are real.
#[derive(Debug, Clone, Copy)]
pub struct ModeSet {
    modes: [Mode; 3],
    len: usize,
}

impl ModeSet {
    pub fn single(m: Mode) -> Self {
        Self { modes: [m, m, m], len: 1 }
    }

    pub fn as_slice(&self) -> &[Mode] {
        &self.modes[..self.len]
    }

    pub fn shifted(mut self, extra_rate: f64) -> Self {
        for m in self.modes[..self.len].iter_mut() {
            m.rate -= extra_rate;
        }
        self
    }

    pub fn zz(&self, t: f64) -> f64 {
        self.as_slice().iter().map(|m| m.at(t)).sum()
    }
}

// Relative root separation below which residues lose too many digits.
const DEGENERACY: f64 = 1e-6;

/// Modal decomposition of [exp(Mt)]_zz, or `None` when two roots nearly
/// coincide and the residue form is ill-conditioned.
pub fn zz_modes(delta: f64, omega: f64, a: f64) -> Option<ModeSet> {
    if omega == 0.0 {
        return Some(ModeSet::single(Mode::real(1.0, 0.0)));
    }
    let d2 = delta * delta;
    let w2 = omega * omega;
    let r2 = d2 + w2;
    if a == 0.0 {
        // Undamped nutation about the tilted effective field.
        let wr = r2.sqrt();
        let osc = 0.5 * w2 / r2;
        let m0 = Mode::real(d2 / r2, 0.0);
        let mp = Mode { amplitude: Complex64::new(osc, 0.0), rate: Complex64::new(0.0, wr) };
        let mm = Mode { amplitude: Complex64::new(osc, 0.0), rate: Complex64::new(0.0, -wr) };
        return Some(ModeSet { modes: [m0, mp, mm], len: 3 });
    }

    let c1 = a * a + r2;
    let c0 = a * w2;
    let q = |s: f64| ((s + 2.0 * a) * s + c1) * s + c0;
    let dq = |s: f64| (3.0 * s + 4.0 * a) * s + c1;

    // q(-a) = -a δ² <= 0 <= q(0) = aΩ², so one real root lies in [-a, 0].
    let (mut lo, mut hi) = (-a, 0.0);
    let mut r = if q(lo) == 0.0 { lo } else { 0.5 * (lo + hi) };
    for _ in 0..200 {
        let v = q(r);
        if v == 0.0 {
            break;
        }
        if v < 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        let d = dq(r);
        let newton = r - v / d;
        let next = if d != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - r).abs() <= 1e-15 * (a + omega + delta.abs()) {
            r = next;
            break;
        }
        r = next;
    }

    // Deflate: q(s) = (s - r)(s² + b s + c).
    let b = 2.0 * a + r;
    let c = c1 + r * b;
    let disc = Complex64::new(b * b - 4.0 * c, 0.0).sqrt();
    // Numerically stable quadratic roots.
    let sgn = if b >= 0.0 { 1.0 } else { -1.0 };
    let qq = -0.5 * (Complex64::new(b, 0.0) + sgn * disc);
    let (s2, s3) = if qq.norm() == 0.0 {
        (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
    } else {
        (qq, Complex64::new(c, 0.0) / qq)
    };
    let roots = [Complex64::new(r, 0.0), s2, s3];

    let scale = a + omega + delta.abs();
    for i in 0..3 {
        for j in (i + 1)..3 {
            if (roots[i] - roots[j]).norm() < DEGENERACY * scale {
                return None;
            }
        }
    }

    let mut modes = [Mode::real(0.0, 0.0); 3];
    for (k, &s) in roots.iter().enumerate() {
        let num = (s + a) * (s + a) + d2;
        let den = (3.0 * s + 4.0 * a) * s + c1;
        modes[k] = Mode { amplitude: num / den, rate: s };
    }
    Some(ModeSet { modes, len: 3 })
}

pub fn generator(delta: f64, omega: f64, a: f64) -> Matrix3<f64> {
    Matrix3::new(-a, -delta, 0.0, delta, -a, -omega, 0.0, omega, 0.0)
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn expm3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let norm = m.abs().row_sum().max();
    let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as i32 } else { 0 };
    let a = m / 2f64.powi(squarings);
    let mut term = Matrix3::identity();
    let mut sum = Matrix3::identity();
    for k in 1..=24 {
        term = term * a / k as f64;
        sum += term;
        if term.abs().max() < 1e-18 * sum.abs().max() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// [exp(Mt)]_zz · e^{-Γt}: the probability-weighted memory of the initial
/// longitudinal component after time `t` of drive plus intrinsic flips.
pub fn driven_propagator_zz(delta: f64, omega: f64, linewidth: f64, gamma: f64, t: f64) -> Result<f64> {
    if !(delta.is_finite() && omega >= 0.0 && linewidth >= 0.0 && gamma >= 0.0 && t >= 0.0) {
        return Err(Error::invalid("propagator arguments must be finite, rates non-negative"));
    }
    let a = 0.5 * linewidth;
    let decay = (-gamma * t).exp();
    match zz_modes(delta, omega, a) {
        Some(ms) => Ok(ms.zz(t) * decay),
        None => Ok(expm3(&(generator(delta, omega, a) * t))[(2, 2)] * decay),
    }
}
