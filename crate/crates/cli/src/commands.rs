use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use spinbath_core::bath_analytic::effective_rate;
use spinbath_core::bath_mc::MCConfig;
use spinbath_core::coherence::{t2_pipeline, t2_pipeline_detailed};
use spinbath_core::experiments::*;
use spinbath_core::waveform::{periodogram, synth_drive, PeriodogramOptions};
use spinbath_core::{ns, us, AngularFrequency, BathSpec, DriveShape, DriveSpec, SeedSet, TimeGrid};

use crate::config::*;
use crate::{Cli, CliError, Command, DriveArgs};

pub const DEFAULT_SEED: u64 = 1;

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Config(format!("cannot create output dir {}: {e}", dir.display())))?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
        self.write(name, |w| writeln!(w, "{text}"))
    }

    /// `<command>.json`: resolved config, seed, tool version, outputs, results.
    fn manifest(mut self, command: &str, cfg: &RunConfig, results: Value) -> Result<(), CliError> {
        let manifest = json!({
            "tool": "spinbath",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": cfg.seed,
            "config": cfg,
            "outputs": self.files.clone(),
            "results": results,
        });
        let name = format!("{command}.json");
        self.json(&name, &manifest)?;
        println!("{}", serde_json::to_string_pretty(&manifest["results"]).unwrap_or_default());
        println!("wrote {}", self.dir.join(name).display());
        Ok(())
    }
}

fn merge_drive(cfg: &mut RunConfig, d: DriveArgs) {
    merge(&mut cfg.drive.shape, d.shape);
    merge(&mut cfg.drive.omega_mhz, d.omega_mhz);
    merge(&mut cfg.drive.dnu_mhz, d.dnu_mhz);
    merge(&mut cfg.drive.carrier_mhz, d.carrier_mhz);
    merge(&mut cfg.drive.off, d.drive.map(|s| s == "off"));
}

fn to_mhz(w: f64) -> f64 {
    w / (2.0 * PI * 1e6)
}

fn freqs(values: &[f64], field: &str) -> Result<Vec<AngularFrequency>, CliError> {
    values.iter().map(|&v| mhz(v, field)).collect()
}

fn seeds(cfg: &RunConfig) -> SeedSet {
    SeedSet::new(cfg.seed.unwrap_or(DEFAULT_SEED))
}

fn stochastic_shape(cfg: &RunConfig) -> Result<DriveShape, CliError> {
    let shape = parse_shape(cfg.drive.shape.as_deref().unwrap_or("lorentzian"))?;
    if shape == DriveShape::Monochromatic {
        return Err(CliError::Config("this command needs a stochastic shape (lorentzian or gaussian)".into()));
    }
    Ok(shape)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    merge(&mut cfg.output.dir, cli.output_dir);
    merge(&mut cfg.seed, cli.seed);
    cfg.seed = Some(cfg.seed.unwrap_or(DEFAULT_SEED));
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::Waveform { drive, realizations, step_ns } => {
            merge_drive(&mut cfg, drive);
            merge(&mut cfg.mc.realizations, realizations);
            merge(&mut cfg.experiment.step_ns, step_ns);
            waveform(cfg)
        }
        Command::Calibrate { targets, bare_t2_us, residual_tau_us } => {
            merge(&mut cfg.bath.targets, targets);
            merge(&mut cfg.bath.bare_t2_us, bare_t2_us);
            merge(&mut cfg.bath.residual_tau_us, residual_tau_us);
            calibrate(cfg)
        }
        Command::T2 { bath, drive } => {
            merge(&mut cfg.bath.file, bath.bath);
            merge_drive(&mut cfg, drive);
            t2(cfg)
        }
        Command::Sweep { bath, shape, omega_mhz, dnu_mhz } => {
            merge(&mut cfg.bath.file, bath.bath);
            merge(&mut cfg.drive.shape, shape);
            merge(&mut cfg.experiment.omega_grid, omega_mhz);
            merge(&mut cfg.experiment.dnu_grid, dnu_mhz);
            sweep(cfg)
        }
        Command::Deer {
            bath,
            mode,
            omega_mhz,
            dnu_mhz,
            t_ss_ns,
            t_ss_max_ns,
            t_ss_step_ns,
            tau_us,
            fwhm_mhz,
            f_start_mhz,
            f_stop_mhz,
            f_step_mhz,
            kappa,
            tau_filter_us,
            mc,
        } => {
            merge(&mut cfg.bath.file, bath.bath);
            let e = &mut cfg.experiment;
            merge(&mut e.mode, mode);
            merge(&mut e.dnu_grid, dnu_mhz);
            merge(&mut e.t_ss_ns, t_ss_ns);
            merge(&mut e.t_ss_max_ns, t_ss_max_ns);
            merge(&mut e.t_ss_step_ns, t_ss_step_ns);
            merge(&mut e.tau_us, tau_us);
            merge(&mut e.fwhm_mhz, fwhm_mhz);
            merge(&mut e.f_start_mhz, f_start_mhz);
            merge(&mut e.f_stop_mhz, f_stop_mhz);
            merge(&mut e.f_step_mhz, f_step_mhz);
            merge(&mut e.kappa, kappa);
            merge(&mut e.tau_filter_us, tau_filter_us);
            merge(&mut cfg.drive.omega_mhz, omega_mhz);
            merge(&mut cfg.mc.spins, mc.mc_spins);
            merge(&mut cfg.mc.realizations, mc.mc_realizations);
            merge(&mut cfg.mc.step_ns, mc.mc_step_ns);
            deer(cfg)
        }
        Command::Optimize { bath, omega_mhz, shape } => {
            merge(&mut cfg.bath.file, bath.bath);
            merge(&mut cfg.drive.omega_mhz, omega_mhz);
            merge(&mut cfg.drive.shape, shape);
            optimize(cfg)
        }
        Command::Power { bath, target, shape } => {
            merge(&mut cfg.bath.file, bath.bath);
            merge(&mut cfg.experiment.target, target);
            merge(&mut cfg.drive.shape, shape);
            power(cfg)
        }
        Command::Shapes { bath, omega_mhz } => {
            merge(&mut cfg.bath.file, bath.bath);
            merge(&mut cfg.experiment.omega_grid, omega_mhz);
            shapes(cfg)
        }
    }
}

fn waveform(cfg: RunConfig) -> Result<(), CliError> {
    let drive = resolve_drive(&cfg.drive, true)?;
    if !drive.is_active() {
        return Err(CliError::Config("waveform needs omega_mhz > 0".into()));
    }
    let (om, lw) = (drive.rabi.rad_per_s(), drive.linewidth.rad_per_s());
    let step = match cfg.experiment.step_ns {
        Some(s) if s > 0.0 => ns(s),
        Some(s) => return Err(CliError::Config(format!("step_ns must be > 0, got {s}"))),
        None => ns(0.25).min(0.05 / om.max(lw)),
    };
    // Welch segment fine enough that window leakage does not widen the line:
    // 32 bins per FWHM for Lorentzian, 8 for Gaussian (flat top); one long
    // segment per tone.
    let seg_for = |bins: f64| ((bins * 2.0 * PI / (lw * step)).ceil() as usize).next_power_of_two().clamp(256, 1 << 16);
    let (seg, samples, default_r) = match drive.shape {
        DriveShape::Monochromatic => (4096, 4096, 8),
        DriveShape::LorentzianStochastic => {
            let s = seg_for(32.0);
            (s, 4 * s, 128)
        }
        DriveShape::GaussianStochastic => {
            let s = seg_for(8.0);
            (s, s, ((1usize << 23) / s).max(256))
        }
    };
    let realizations = cfg.mc.realizations.unwrap_or(default_r);
    let grid = TimeGrid::new(0.0, step, samples)?;
    let seed = seeds(&cfg);
    let waves = (0..realizations as u64)
        .into_par_iter()
        .map(|i| synth_drive(&drive, &grid, &seed, i))
        .collect::<spinbath_core::Result<Vec<_>>>()?;
    let est = periodogram(&waves, PeriodogramOptions { shape: drive.shape, segment_len: Some(seg) })?;
    let amp_dev = waves
        .iter()
        .flat_map(|w| w.envelope.iter().map(|z| (z.norm() / om - 1.0).abs()))
        .fold(0.0, f64::max);
    let mut out = Output::new(cfg.output_dir())?;
    out.write("waveform.csv", |w| waves[0].write_csv(w))?;
    out.write("waveform_spectrum.csv", |w| est.write_csv(w))?;
    let results = json!({
        "shape": drive.shape.name(),
        "fitted_fwhm_mhz": est.fitted_fwhm.mhz(),
        "fitted_center_mhz": to_mhz(est.fitted_center),
        "fit_residual": est.fit_residual,
        "total_power": est.total_power(),
        "max_relative_amplitude_deviation": amp_dev,
        "realizations": realizations,
        "samples": samples,
        "segment": seg,
        "step_ns": step * 1e9,
    });
    out.manifest("waveform", &cfg, results)
}

fn calibrate(cfg: RunConfig) -> Result<(), CliError> {
    let bare = us(cfg.bath.bare_t2_us.unwrap_or(33.1));
    let targets = match cfg.bath.targets.as_deref().unwrap_or("paper") {
        "paper" => CalibrationTargets { bare_t2: bare, ..CalibrationTargets::reference() },
        "bare" => CalibrationTargets::bare_only(bare),
        other => return Err(CliError::Config(format!("unknown target preset `{other}` (paper, bare)"))),
    };
    let template = match &cfg.bath.components {
        Some(c) => BathSpec { components: c.iter().map(component_from).collect::<Result<_, _>>()? },
        None => reference_template(us(cfg.bath.residual_tau_us.unwrap_or(10.0)))?,
    };
    let r = calibrate_bath(&targets, &template)?;
    let file = BathFile { components: r.bath.components.iter().map(component_to).collect(), bare_t2_us: r.bare_t2 * 1e6 };
    let mut out = Output::new(cfg.output_dir())?;
    out.json("bath.json", &file)?;
    let points: Vec<Value> = targets
        .points
        .iter()
        .zip(&r.ratios)
        .map(|(p, got)| {
            json!({
                "omega_mhz": p.drive.rabi.mhz(),
                "dnu_mhz": p.drive.linewidth.mhz(),
                "shape": p.drive.shape.name(),
                "target_ratio": p.ratio,
                "ratio": got,
            })
        })
        .collect();
    let results = json!({
        "bare_t2_us": r.bare_t2 * 1e6,
        "target_bare_t2_us": targets.bare_t2 * 1e6,
        "points": points,
        "weighted_log_residuals": r.residuals,
        "evaluations": r.evaluations,
        "components": file.components,
    });
    out.manifest("calibrate", &cfg, results)
}

fn t2(cfg: RunConfig) -> Result<(), CliError> {
    let bath = resolve_bath(&cfg)?;
    let drive = resolve_drive(&cfg.drive, true)?;
    let run = t2_pipeline_detailed(&bath, &drive)?;
    let bare = if drive.is_active() { t2_pipeline(&bath, &DriveSpec::off())?.t2 } else { run.fit.t2 };
    let mut out = Output::new(cfg.output_dir())?;
    out.write("t2_coherence.csv", |w| run.curve.write_csv(w))?;
    let results = json!({
        "drive": {
            "shape": drive.shape.name(),
            "enabled": drive.is_active(),
            "omega_mhz": drive.rabi.mhz(),
            "dnu_mhz": drive.linewidth.mhz(),
        },
        "fit": run.fit.summary(),
        "bare_t2_us": bare * 1e6,
        "ratio": run.fit.t2 / bare,
    });
    out.manifest("t2", &cfg, results)
}

fn wide_table<W: Write>(w: W, s: &SweepResult, table: &[Vec<f64>], scale: f64) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["omega_mhz".to_string()];
    header.extend(s.linewidths.iter().map(|l| format!("dnu_{}", l.mhz())));
    out.write_record(&header)?;
    for (om, row) in s.omegas.iter().zip(table) {
        let mut rec = vec![om.mhz().to_string()];
        rec.extend(row.iter().map(|v| (v * scale).to_string()));
        out.write_record(&rec)?;
    }
    out.flush()
}

fn sweep(cfg: RunConfig) -> Result<(), CliError> {
    let bath = resolve_bath(&cfg)?;
    let shape = stochastic_shape(&cfg)?;
    let omegas = parse_grid(
        cfg.experiment.omega_grid.as_deref().ok_or_else(|| CliError::Config("missing required field `omega_grid` (--omega-mhz)".into()))?,
        "omega_grid",
    )?;
    let dnus = parse_grid(cfg.experiment.dnu_grid.as_deref().unwrap_or("0"), "dnu_grid")?;
    let s = t2_sweep(&bath, &freqs(&omegas, "omega_grid")?, &freqs(&dnus, "dnu_grid")?, shape)?;
    let mut out = Output::new(cfg.output_dir())?;
    out.write("sweep.csv", |w| s.write_csv(w))?;
    out.write("sweep_t2_us.csv", |w| wide_table(w, &s, &s.t2, 1e6))?;
    out.write("sweep_n.csv", |w| wide_table(w, &s, &s.n, 1.0))?;
    let maxima: Vec<Value> = (0..s.omegas.len())
        .map(|i| json!({ "omega_mhz": s.omegas[i].mhz(), "interior_max_dnu_mhz": s.interior_max(i).map(|k| s.linewidths[k].mhz()) }))
        .collect();
    let failed = s.failures.iter().flatten().filter(|f| f.is_some()).count();
    let results = json!({
        "shape": shape.name(),
        "bare_t2_us": s.bare_t2 * 1e6,
        "rows": s.omegas.len(),
        "columns": s.linewidths.len(),
        "interior_max": maxima,
        "failed_cells": failed,
    });
    out.manifest("sweep", &cfg, results)
}

/// Calibrated bath if one was given or left by `calibrate`; `None` when none
/// exists at the default location.
fn optional_bath(cfg: &RunConfig) -> Result<Option<BathSpec>, CliError> {
    let default = cfg.output_dir().join("bath.json");
    if cfg.bath.components.is_none() && cfg.bath.file.is_none() && !default.exists() {
        return Ok(None);
    }
    resolve_bath(cfg).map(Some)
}

fn deer(cfg: RunConfig) -> Result<(), CliError> {
    let e = &cfg.experiment;
    let bath = optional_bath(&cfg)?;
    let tau = us(e.tau_us.unwrap_or(16.0));
    let mut probe = match &bath {
        Some(b) => DeerProbe::from_bath(b, tau)?,
        None => {
            eprintln!("notice: no calibrated bath; using the default probe (κ = 0.5, bare = 0.5)");
            DeerProbe { tau, ..DeerProbe::reference() }
        }
    };
    if let Some(f) = e.fwhm_mhz {
        probe.inhomogeneous_fwhm = mhz(f, "fwhm_mhz")?;
    }
    let mode = e.mode.clone().unwrap_or_else(|| "spectrum".into());
    let t_ss = ns(e.t_ss_ns.unwrap_or(if mode == "spectrum" { 60.0 } else { 57.5 }));
    let omega = match cfg.drive.omega_mhz {
        Some(o) => mhz(o, "omega_mhz")?,
        None if mode == "spectrum" => AngularFrequency::new(PI / t_ss)?,
        None => mhz(8.7, "omega_mhz")?,
    };
    let mut kappa_info = Value::Null;
    match e.kappa.as_deref().unwrap_or("gaussian") {
        "gaussian" => {}
        "mc" => {
            let b = bath.as_ref().ok_or_else(|| CliError::Config("kappa = mc needs a calibrated bath".into()))?;
            let mc = MCConfig {
                n_spins: cfg.mc.spins.unwrap_or(20),
                n_realizations: cfg.mc.realizations.unwrap_or(400),
                integrator_step: ns(cfg.mc.step_ns.unwrap_or(0.5)),
                seed: seeds(&cfg),
            };
            let k = calibrate_kappa_mc(b, &probe, &mc, PI / omega.rad_per_s(), omega)?;
            probe.kappa = k.kappa;
            probe.bare = k.bare;
            kappa_info = serde_json::to_value(k).map_err(|e| CliError::Numerical(e.to_string()))?;
        }
        other => return Err(CliError::Config(format!("unknown kappa source `{other}` (gaussian, mc)"))),
    }
    let probe_json = json!({
        "fwhm_mhz": probe.inhomogeneous_fwhm.mhz(),
        "resonance_mhz": probe.resonance.mhz(),
        "gamma_per_us": probe.gamma.rad_per_s() * 1e-6,
        "tau_us": probe.tau * 1e6,
        "kappa": probe.kappa,
        "bare": probe.bare,
        "kappa_mc": kappa_info,
    });
    let mut out = Output::new(cfg.output_dir())?;
    let results = match mode.as_str() {
        "spectrum" => {
            let res = probe.resonance.mhz();
            let (lo, hi, df) =
                (e.f_start_mhz.unwrap_or(res - 40.0), e.f_stop_mhz.unwrap_or(res + 40.0), e.f_step_mhz.unwrap_or(1.0));
            if !(df > 0.0 && hi > lo) {
                return Err(CliError::Config("need f_stop_mhz > f_start_mhz and f_step_mhz > 0".into()));
            }
            let n = ((hi - lo) / df).round() as usize + 1;
            let carriers = freqs(&(0..n).map(|k| lo + df * k as f64).collect::<Vec<_>>(), "f_start_mhz")?;
            let spec = deer_spectrum(&probe, &carriers, t_ss, omega)?;
            for w in &spec.warnings {
                eprintln!("warning: {w}");
            }
            let fit = fit_deer_spectrum(&spec)?;
            out.write("deer_spectrum.csv", |w| spec.write_csv(w))?;
            json!({
                "mode": "spectrum",
                "probe": probe_json,
                "t_ss_ns": t_ss * 1e9,
                "omega_mhz": omega.mhz(),
                "dip_mhz": to_mhz(spec.dip()),
                "warnings": spec.warnings,
                "fit": {
                    "resonance_mhz": fit.resonance.mhz(),
                    "fwhm_mhz": fit.inhomogeneous_fwhm.mhz(),
                    "kappa": fit.kappa,
                    "bare": fit.bare,
                    "rms_residual": fit.rms_residual,
                },
            })
        }
        "rabi" => {
            let dnus = freqs(&parse_grid(e.dnu_grid.as_deref().unwrap_or("0,5,17,48"), "dnu_grid")?, "dnu_grid")?;
            let (tmax, dt) = (e.t_ss_max_ns.unwrap_or(600.0), e.t_ss_step_ns.unwrap_or(5.0));
            if !(dt > 0.0 && tmax > dt) {
                return Err(CliError::Config("need t_ss_max_ns > t_ss_step_ns > 0".into()));
            }
            let grid = TimeGrid::new(0.0, ns(dt), (tmax / dt).round() as usize + 1)?;
            let curves = deer_rabi(&probe, &grid, &dnus, omega)?;
            out.write("deer_rabi.csv", |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(["dnu_mhz", "t_ss_ns", "c"])?;
                for cv in &curves {
                    for (t, v) in cv.grid.points().zip(&cv.c) {
                        c.write_record([cv.linewidth.mhz().to_string(), (t * 1e9).to_string(), v.to_string()])?;
                    }
                }
                c.flush()
            })?;
            let fit = if dnus.iter().any(|d| d.rad_per_s() == 0.0) {
                let f = fit_deer_rabi(&curves)?;
                json!({
                    "fwhm_mhz": f.inhomogeneous_fwhm.mhz(),
                    "fwhm_err_mhz": to_mhz(f.fwhm_err),
                    "omega_mhz": f.omega.mhz(),
                    "omega_err_mhz": to_mhz(f.omega_err),
                    "kappa": f.kappa,
                    "bare": f.bare,
                    "residuals": f.residuals,
                })
            } else {
                Value::Null
            };
            let mut rates = Vec::new();
            for cv in curves.iter().filter(|c| c.linewidth.rad_per_s() > 0.0) {
                let eq3 = effective_rate(omega, cv.linewidth, AngularFrequency::ZERO)?.rad_per_s();
                rates.push(json!({
                    "dnu_mhz": cv.linewidth.mhz(),
                    "rate_per_us": cv.decorrelation_rate().ok().map(|r| r * 1e-6),
                    "broad_drive_rate_per_us": eq3 * 1e-6,
                }));
            }
            json!({ "mode": "rabi", "probe": probe_json, "omega_mhz": omega.mhz(), "fit": fit, "rates": rates })
        }
        "spectra" => {
            let dnus = freqs(&parse_grid(e.dnu_grid.as_deref().unwrap_or("0,48"), "dnu_grid")?, "dnu_grid")?;
            let tau_f = us(e.tau_filter_us.unwrap_or(10.0));
            let curves = driven_spectra(&probe, &dnus, omega, tau_f)?;
            let label = |c: &DrivenSpectrum| match c.linewidth {
                None => "undriven".to_string(),
                Some(l) if l.rad_per_s() == 0.0 => "monochromatic".to_string(),
                Some(l) => format!("dnu_{}", l.mhz()),
            };
            out.write("deer_spectra.csv", |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(["series", "omega_mhz", "s_norm"])?;
                for cv in &curves {
                    let name = label(cv);
                    for (om, s) in cv.spectrum.grid.points().zip(&cv.spectrum.s) {
                        c.write_record([name.clone(), to_mhz(om).to_string(), s.to_string()])?;
                    }
                }
                c.flush()
            })?;
            let overlaps: Vec<Value> = curves
                .iter()
                .map(|c| json!({ "series": label(c), "overlap": c.overlap, "integrated_power": c.spectrum.integrated_power() }))
                .collect();
            json!({ "mode": "spectra", "probe": probe_json, "omega_mhz": omega.mhz(), "tau_filter_us": tau_f * 1e6, "overlaps": overlaps })
        }
        other => return Err(CliError::Config(format!("unknown deer mode `{other}` (spectrum, rabi, spectra)"))),
    };
    out.manifest("deer", &cfg, results)
}

fn optimize(cfg: RunConfig) -> Result<(), CliError> {
    let bath = resolve_bath(&cfg)?;
    let shape = stochastic_shape(&cfg)?;
    let omega = mhz(require(cfg.drive.omega_mhz, "omega_mhz")?, "omega_mhz")?;
    let best = optimize_linewidth(&bath, omega, shape)?;
    let bare = t2_pipeline(&bath, &DriveSpec::off())?.t2;
    let mono = t2_pipeline(&bath, &DriveSpec::monochromatic(omega))?.t2;
    let mut out = Output::new(cfg.output_dir())?;
    out.write("optimize_scan.csv", |w| best.write_scan_csv(w))?;
    let results = json!({
        "shape": shape.name(),
        "omega_mhz": omega.mhz(),
        "dnu_star_mhz": best.linewidth.mhz(),
        "t2_us": best.t2 * 1e6,
        "at_boundary": best.at_boundary,
        "bare_t2_us": bare * 1e6,
        "ratio": best.t2 / bare,
        "monochromatic_t2_us": mono * 1e6,
    });
    out.manifest("optimize", &cfg, results)
}

fn power(cfg: RunConfig) -> Result<(), CliError> {
    let bath = resolve_bath(&cfg)?;
    let shape = stochastic_shape(&cfg)?;
    let target = cfg.experiment.target.unwrap_or(2.0);
    let r = power_saving_report(&bath, target, shape)?;
    let out = Output::new(cfg.output_dir())?;
    let results = json!({
        "shape": shape.name(),
        "target_ratio": target,
        "omega_mono_mhz": r.omega_mono.mhz(),
        "omega_stochastic_mhz": r.omega_stochastic.mhz(),
        "dnu_stochastic_mhz": r.linewidth_stochastic.mhz(),
        "power_ratio": if r.indeterminate { Value::Null } else { json!(r.power_ratio) },
        "indeterminate": r.indeterminate,
        "ceiling_ratio": r.ceiling_ratio,
    });
    out.manifest("power", &cfg, results)
}

fn shapes(cfg: RunConfig) -> Result<(), CliError> {
    let bath = resolve_bath(&cfg)?;
    let omegas = freqs(&parse_grid(cfg.experiment.omega_grid.as_deref().unwrap_or("0,1,2,3,4.9,8.7"), "omega_grid")?, "omega_grid")?;
    let rep = shape_comparison(&bath, &omegas)?;
    let mut out = Output::new(cfg.output_dir())?;
    out.write("shapes.csv", |w| rep.write_csv(w))?;
    let rows: Vec<Value> = rep
        .rows
        .iter()
        .map(|r| {
            json!({
                "omega_mhz": r.omega.mhz(),
                "lorentzian_t2_us": r.lorentzian_t2 * 1e6,
                "gaussian_t2_us": r.gaussian_t2 * 1e6,
                "winner": r.winner.map_or("tie", |s| s.name()),
            })
        })
        .collect();
    out.manifest("shapes", &cfg, json!({ "bare_t2_us": rep.bare_t2 * 1e6, "rows": rows }))
}
