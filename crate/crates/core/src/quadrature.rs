//! Adaptive Gauss–Kronrod (G7/K15) integration.
//!
//! The vector form integrates many quantities sharing one abscissa set, which
//! is how detuning averages are taken: the expensive per-detuning mode
//! decomposition is done once per node and reused for every output.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod abscissae 1, 3, 5, 7.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-12, rel: 1e-10, max_intervals: 4000 }
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    // Largest error relative to the per-component tolerance share.
    score: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.score == other.score
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score)
    }
}

fn gk15<F>(f: &mut F, a: f64, b: f64, m: usize, buf: &mut [f64]) -> (Vec<f64>, Vec<f64>)
where
    F: FnMut(f64, &mut [f64]),
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; m];
    let mut gauss = vec![0.0; m];
    f(c, buf);
    for i in 0..m {
        kron[i] = WGK[7] * buf[i];
        gauss[i] = WG[3] * buf[i];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        for x in [c - dx, c + dx] {
            f(x, buf);
            for i in 0..m {
                kron[i] += WGK[j] * buf[i];
                if j % 2 == 1 {
                    gauss[i] += WG[j / 2] * buf[i];
                }
            }
        }
    }
    let err = kron.iter().zip(&gauss).map(|(k, g)| (h * (k - g)).abs()).collect();
    for k in kron.iter_mut() {
        *k *= h;
    }
    (kron, err)
}

/// Integrates a vector-valued function of one variable over the panels
/// delimited by `breaks` (sorted, at least two points).
///
/// `f(x, out)` writes the `m` integrand values at `x` into `out`. Refinement
/// bisects the worst panel until every component satisfies
/// `err <= max(abs, rel·|value|)`.
pub fn integrate_vec<F>(mut f: F, breaks: &[f64], m: usize, tol: Tolerance) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("integration breaks must be strictly increasing"));
    }
    let mut buf = vec![0.0; m];
    let mut heap = BinaryHeap::new();
    let mut total = vec![0.0; m];
    let mut total_err = vec![0.0; m];

    let push = |heap: &mut BinaryHeap<Panel>, a: f64, b: f64, value: Vec<f64>, error: Vec<f64>| {
        heap.push(Panel { a, b, value, error, score: 0.0 });
    };
    for w in breaks.windows(2) {
        let (v, e) = gk15(&mut f, w[0], w[1], m, &mut buf);
        for i in 0..m {
            total[i] += v[i];
            total_err[i] += e[i];
        }
        push(&mut heap, w[0], w[1], v, e);
    }

    let n_panels = |h: &BinaryHeap<Panel>| h.len();
    loop {
        let allowed: Vec<f64> = total.iter().map(|v| tol.abs.max(tol.rel * v.abs())).collect();
        if total_err.iter().zip(&allowed).all(|(e, a)| e <= a) {
            return Ok(total);
        }
        if n_panels(&heap) >= tol.max_intervals {
            let worst = total_err
                .iter()
                .zip(&allowed)
                .map(|(e, a)| e / a)
                .fold(0.0, f64::max);
            return Err(Error::Quadrature(format!(
                "{} panels exhausted, error {:.3e} x tolerance",
                tol.max_intervals, worst
            )));
        }
        // Rescore against the current tolerance; scores go stale as totals
        // change, so rebuild the heap ordering.
        let mut panels: Vec<Panel> = heap.into_vec();
        for p in panels.iter_mut() {
            p.score = p.error.iter().zip(&allowed).map(|(e, a)| e / a).fold(0.0, f64::max);
        }
        heap = BinaryHeap::from(panels);
        // Split a batch of the worst panels per rescoring pass.
        let batch = (heap.len() / 8).max(1);
        for _ in 0..batch {
            let Some(p) = heap.pop() else { break };
            let mid = 0.5 * (p.a + p.b);
            if !(mid > p.a && mid < p.b) {
                return Err(Error::Quadrature("panel width underflow".into()));
            }
            let (v1, e1) = gk15(&mut f, p.a, mid, m, &mut buf);
            let (v2, e2) = gk15(&mut f, mid, p.b, m, &mut buf);
            for i in 0..m {
                total[i] += v1[i] + v2[i] - p.value[i];
                total_err[i] += e1[i] + e2[i] - p.error[i];
            }
            push(&mut heap, p.a, mid, v1, e1);
            push(&mut heap, mid, p.b, v2, e2);
        }
    }
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let v = integrate_vec(|x, out| out[0] = f(x), &[a, b], 1, tol)?;
    Ok(v[0])
}

/// Fixed 15-point Kronrod rule on one panel, no refinement. Returns the
/// value and the |K15 − G7| error estimate.
pub fn kronrod15<F>(mut f: F, a: f64, b: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let mut buf = [0.0];
    let (v, e) = gk15(&mut |x, out: &mut [f64]| out[0] = f(x), a, b, 1, &mut buf);
    (v[0], e[0])
}
