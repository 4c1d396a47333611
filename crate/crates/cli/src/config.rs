use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinbath_core::{
    mhz_to_angular, us, AngularFrequency, BathComponent, BathSpec, DriveShape, DriveSpec,
};

use crate::CliError;

/// Everything a run depends on. Sections mirror the TOML file; command-line
/// flags are merged in before the config is written to the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub bath: BathSection,
    pub drive: DriveSection,
    pub mc: McSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BathSection {
    /// Calibrated bath written by `calibrate`.
    pub file: Option<PathBuf>,
    /// Inline components; take precedence over `file`.
    pub components: Option<Vec<ComponentConfig>>,
    /// Calibration target preset: "paper" (bare T2 plus reference driven ratios) or "bare".
    pub targets: Option<String>,
    pub bare_t2_us: Option<f64>,
    pub residual_tau_us: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    /// Correlation time 1/Γ; omit for a static component.
    pub tau_c_us: Option<f64>,
    pub fwhm_mhz: f64,
    pub coupling_mhz: f64,
    pub resonance_mhz: f64,
    pub driven: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    /// "mono", "lorentzian" or "gaussian".
    pub shape: Option<String>,
    pub omega_mhz: Option<f64>,
    pub dnu_mhz: Option<f64>,
    pub carrier_mhz: Option<f64>,
    pub off: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub spins: Option<usize>,
    pub realizations: Option<usize>,
    pub step_ns: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub omega_grid: Option<String>,
    pub dnu_grid: Option<String>,
    pub target: Option<f64>,
    pub mode: Option<String>,
    pub tau_us: Option<f64>,
    pub t_ss_ns: Option<f64>,
    pub t_ss_max_ns: Option<f64>,
    pub t_ss_step_ns: Option<f64>,
    pub f_start_mhz: Option<f64>,
    pub f_stop_mhz: Option<f64>,
    pub f_step_mhz: Option<f64>,
    pub fwhm_mhz: Option<f64>,
    pub kappa: Option<String>,
    pub tau_filter_us: Option<f64>,
    pub duration_us: Option<f64>,
    pub step_ns: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Fills `slot` from the command line if a flag was given.
pub fn merge<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

pub fn mhz(f: f64, field: &str) -> Result<AngularFrequency, CliError> {
    mhz_to_angular(f)
        .ok()
        .filter(|w| w.rad_per_s() >= 0.0)
        .ok_or_else(|| CliError::Config(format!("{field} must be a finite frequency >= 0, got {f}")))
}

pub fn require<T: Copy>(v: Option<T>, field: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing required field `{field}`")))
}

pub fn parse_shape(s: &str) -> Result<DriveShape, CliError> {
    match s {
        "mono" | "monochromatic" => Ok(DriveShape::Monochromatic),
        "lorentzian" => Ok(DriveShape::LorentzianStochastic),
        "gaussian" => Ok(DriveShape::GaussianStochastic),
        other => Err(CliError::Config(format!("unknown drive shape `{other}` (mono, lorentzian, gaussian)"))),
    }
}

/// Drive from the `[drive]` section. Δν = 0 selects a monochromatic drive;
/// a stochastic shape asked for with Δν = 0 is coerced with a notice.
pub fn resolve_drive(d: &DriveSection, need_omega: bool) -> Result<DriveSpec, CliError> {
    if d.off == Some(true) {
        return Ok(DriveSpec::off());
    }
    let omega = match d.omega_mhz {
        Some(o) => mhz(o, "omega_mhz")?,
        None if need_omega => return Err(CliError::Config("missing required field `omega_mhz` (--omega-mhz)".into())),
        None => return Ok(DriveSpec::off()),
    };
    let mut shape = parse_shape(d.shape.as_deref().unwrap_or("lorentzian"))?;
    let dnu = mhz(d.dnu_mhz.unwrap_or(0.0), "dnu_mhz")?;
    if dnu.rad_per_s() == 0.0 && shape != DriveShape::Monochromatic {
        eprintln!("notice: Δν = 0 selects a monochromatic drive");
        shape = DriveShape::Monochromatic;
    }
    if dnu.rad_per_s() > 0.0 && shape == DriveShape::Monochromatic {
        return Err(CliError::Config("a monochromatic drive cannot have dnu_mhz > 0".into()));
    }
    let mut drive = DriveSpec::with_shape(shape, omega, dnu);
    if let Some(c) = d.carrier_mhz {
        drive = drive.with_carrier(mhz(c, "carrier_mhz")?);
    }
    if omega.rad_per_s() == 0.0 {
        drive = DriveSpec::off();
    }
    Ok(drive)
}

/// Parses "4.9", "0,5,17,48", "log:lo:hi:n" or "lin:lo:hi:n" (MHz).
pub fn parse_grid(spec: &str, field: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Config(format!("{field}: cannot parse `{spec}`: {why}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let parts: Vec<&str> = spec.split(':').collect();
    let values = match parts.as_slice() {
        [kind @ ("log" | "lin"), lo, hi, n] => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            let n: usize = n.trim().parse().map_err(|_| bad("count must be an integer"))?;
            if n < 2 || !(lo > 0.0 || *kind == "lin") || !(hi > lo) {
                return Err(bad("need n >= 2 and 0 < lo < hi (lin allows lo = 0)"));
            }
            (0..n)
                .map(|k| {
                    let f = k as f64 / (n - 1) as f64;
                    if *kind == "log" { lo * (hi / lo).powf(f) } else { lo + (hi - lo) * f }
                })
                .collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad("expected a list or kind:lo:hi:n")),
    };
    if values.is_empty() || values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(bad("values must be finite and >= 0"));
    }
    Ok(values)
}

pub fn component_from(c: &ComponentConfig) -> Result<BathComponent, CliError> {
    let gamma = match c.tau_c_us {
        None => AngularFrequency::ZERO,
        Some(t) => AngularFrequency::from_correlation_time(us(t))
            .map_err(|_| CliError::Config(format!("tau_c_us must be > 0, got {t}")))?,
    };
    Ok(BathComponent {
        gamma_intrinsic: gamma,
        inhomogeneous_fwhm: mhz(c.fwhm_mhz, "fwhm_mhz")?,
        coupling_rms: mhz(c.coupling_mhz, "coupling_mhz")?,
        resonance: mhz(c.resonance_mhz, "resonance_mhz")?,
        driven: c.driven,
    })
}

pub fn component_to(c: &BathComponent) -> ComponentConfig {
    let g = c.gamma_intrinsic.rad_per_s();
    ComponentConfig {
        tau_c_us: (g > 0.0).then(|| 1e6 / g),
        fwhm_mhz: c.inhomogeneous_fwhm.mhz(),
        coupling_mhz: c.coupling_rms.mhz(),
        resonance_mhz: c.resonance.mhz(),
        driven: c.driven,
    }
}

/// On-disk calibrated bath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathFile {
    pub components: Vec<ComponentConfig>,
    pub bare_t2_us: f64,
}

impl BathFile {
    pub fn bath(&self) -> Result<BathSpec, CliError> {
        let comps = self.components.iter().map(component_from).collect::<Result<Vec<_>, _>>()?;
        BathSpec::new(comps).map_err(CliError::from)
    }
}

/// The bath for commands that need one: inline components, then an explicit
/// file, then `bath.json` left in the output directory by `calibrate`.
pub fn resolve_bath(cfg: &RunConfig) -> Result<BathSpec, CliError> {
    if let Some(comps) = &cfg.bath.components {
        let comps = comps.iter().map(component_from).collect::<Result<Vec<_>, _>>()?;
        return BathSpec::new(comps).map_err(CliError::from);
    }
    let path = cfg.bath.file.clone().unwrap_or_else(|| cfg.output_dir().join("bath.json"));
    if !path.exists() {
        return Err(CliError::Config(format!(
            "no bath: run `spinbath calibrate` first or pass --bath (looked for {})",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read bath file {}: {e}", path.display())))?;
    let file: BathFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("bath file {}: {e}", path.display())))?;
    file.bath()
}
