use std::fs;
use std::path::Path;

use thiserror::Error;

use fringe_core::experiment::{self, Model};
use fringe_core::io::{self, fmt_f64, EventLog, IoError, ReferenceKind, RunConfig, Table};
use fringe_core::optics::{focal_plane_mode, fresnel_oracle, Branch, Complex64};
use fringe_core::polarization::{entangled_state, qwp_scan};
use fringe_core::stats::{fit_pattern, visibility, R2_TARGET};

use crate::args::{BandModel, Cli, Command, OracleKind, Reference, SimModel};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] fringe_core::Error),
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Input(_) => "input",
            CliError::Core(e) => e.category(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.category() {
            "usage" => 2,
            "config-parse" | "config-unknown-key" | "config-validation" => 3,
            "file" => 4,
            "format" => 5,
            "input" => 6,
            "non-convergence" => 7,
            _ => 8,
        }
    }
}

fn reference_kind(flag: Option<Reference>, cfg: &RunConfig) -> ReferenceKind {
    match flag {
        Some(Reference::Fitted) => ReferenceKind::Fitted,
        Some(Reference::Exact) => ReferenceKind::Exact,
        None => cfg.stats.reference,
    }
}

fn validated(cfg: RunConfig) -> Result<RunConfig, CliError> {
    cfg.validate()?;
    Ok(cfg)
}

fn parse_range(range: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("expected START:STOP:STEP, got `{range}`"));
    let parts: Vec<f64> = range
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::File {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    Ok(())
}

fn array_pixels(log: &EventLog, n_pixels: usize) -> Vec<usize> {
    log.events
        .iter()
        .map(|e| e.channel as usize)
        .filter(|&c| c < n_pixels)
        .collect()
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(k) = cli.global.workers {
        if k == 0 {
            return Err(CliError::Usage("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut cfg = match &cli.global.config {
        Some(p) => io::load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    let seed = cfg.seed;

    match cli.command {
        Command::Simulate {
            model,
            photons,
            qwp,
            out,
        } => {
            if let Some(q) = qwp {
                cfg.polarization.qwp_deg = q;
            }
            let cfg = validated(cfg)?;
            let model = match model {
                SimModel::Qm => Model::Qm,
                SimModel::Corpuscular => Model::Corpuscular,
                SimModel::Entangled => Model::Entangled,
            };
            let run = experiment::simulate(model, photons, &cfg, seed)?;
            println!(
                "pairs={} coincidences={} accidentals={} duration_s={}",
                run.pairs_emitted,
                run.coincidences(),
                run.accidentals,
                run.duration_s
            );
            create_parent(&out)?;
            io::write_events(&out, &EventLog::new(seed, &cfg, run.events))?;
        }
        Command::Buildup { events, frames, out } => {
            let log = io::read_events(&events)?;
            let cfg = log.run_config()?;
            let n_pixels = cfg.optics.n_pixels;
            let available = array_pixels(&log, n_pixels).len();
            if let Some(&f) = frames.iter().find(|&&f| f > available) {
                return Err(CliError::Input(format!(
                    "frame {f} exceeds the {available} array events in {}",
                    events.display()
                )));
            }
            let hists = experiment::buildup_frames(&log.events, &frames, n_pixels)?;
            fs::create_dir_all(&out).map_err(|e| IoError::File {
                path: out.clone(),
                source: e,
            })?;
            for (f, h) in frames.iter().zip(&hists) {
                io::write_histogram(&out.join(format!("frame_{f}.csv")), h)?;
            }
        }
        Command::R2band {
            model,
            runs,
            nmax,
            reference,
            out,
        } => {
            if let Some(r) = runs {
                cfg.stats.band_runs = r;
            }
            if let Some(n) = nmax {
                cfg.stats.n_max = n;
            }
            cfg.stats.reference = reference_kind(reference, &cfg);
            let cfg = validated(cfg)?;
            let reference = experiment::reference(&cfg, cfg.stats.reference, seed)?;
            let model = match model {
                BandModel::Qm => Model::Qm,
                BandModel::Corpuscular => Model::Corpuscular,
            };
            let band = experiment::band(model, &cfg, &reference.distribution, cfg.stats.band_runs, seed)?;
            let show = |v: Option<String>| v.unwrap_or_else(|| format!(">{}", cfg.stats.n_max));
            println!(
                "model={} target={R2_TARGET} median_crossing={} first_passage_median={}",
                band.model,
                show(band.median_crossing(R2_TARGET).map(|n| n.to_string())),
                show(band.median_first_passage().map(|n| n.to_string())),
            );
            create_parent(&out)?;
            io::write_band(&out, &band)?;
        }
        Command::Ensemble { runs, step, nmax, out } => {
            if let Some(r) = runs {
                cfg.corpuscular.ensemble_runs = r;
            }
            if let Some(s) = step {
                cfg.stats.lrt_step = s;
            }
            if let Some(n) = nmax {
                cfg.stats.n_max = n;
            }
            let cfg = validated(cfg)?;
            let grid = experiment::n_grid(cfg.stats.lrt_step, cfg.stats.n_max);
            if grid.is_empty() {
                return Err(CliError::Usage("N grid is empty: step exceeds nmax".into()));
            }
            let ens = experiment::ensemble(&cfg, cfg.corpuscular.ensemble_runs, &grid, seed)?;
            create_parent(&out)?;
            io::write_ensemble(&out, &ens)?;
        }
        Command::Lrt {
            events,
            corp_ensemble,
            reference,
            out,
        } => {
            let log = io::read_events(&events)?;
            let mut data_cfg = log.run_config()?;
            data_cfg.stats.reference = reference_kind(reference, &cfg);
            data_cfg.stats.reference_photons = cfg.stats.reference_photons;
            let ens = io::read_ensemble(&corp_ensemble)?;
            let n_pixels = data_cfg.optics.n_pixels;
            if ens.distributions.first().is_some_and(|d| d.len() != n_pixels) {
                return Err(CliError::Input("ensemble and event log disagree on the pixel count".into()));
            }
            let qm = experiment::reference(&data_cfg, data_cfg.stats.reference, seed)?;
            let pixels = array_pixels(&log, n_pixels);
            let series = experiment::likelihood_series(&pixels, &qm.distribution, &ens)?;
            let mut t = Table::new(&["n", "log_lambda"]);
            for (n, l) in &series {
                t.push([n.to_string(), fmt_f64(*l)]);
            }
            if let Some(min) = series.iter().map(|(_, l)| *l).reduce(f64::min) {
                println!("points={} min_log_lambda={min}", series.len());
            }
            create_parent(&out)?;
            io::write_table(&out, &t)?;
        }
        Command::Heraldscan { qwp, out } => {
            let cfg = validated(cfg)?;
            let angles = parse_range(&qwp)?;
            let state = entangled_state(cfg.polarization.fidelity).map_err(fringe_core::Error::from)?;
            let rows = qwp_scan(&state, &cfg.optics, &angles).map_err(fringe_core::Error::from)?;
            let mut t = Table::new(&[
                "qwp_deg",
                "port",
                "probability",
                "predicted_visibility",
                "fitted_visibility",
                "fringe_phase",
                "bloch_x",
                "bloch_y",
                "bloch_z",
            ]);
            for r in rows {
                t.push([
                    fmt_f64(r.qwp_deg),
                    r.port.label().to_string(),
                    fmt_f64(r.probability),
                    fmt_f64(r.predicted_visibility),
                    fmt_f64(r.fitted_visibility),
                    fmt_f64(r.fringe_phase),
                    fmt_f64(r.bloch[0]),
                    fmt_f64(r.bloch[1]),
                    fmt_f64(r.bloch[2]),
                ]);
            }
            create_parent(&out)?;
            io::write_table(&out, &t)?;
        }
        Command::Fit { hist, out } => {
            let cfg = validated(cfg)?;
            let h = io::read_histogram(&hist)?;
            if h.len() != cfg.optics.n_pixels {
                return Err(CliError::Input(format!(
                    "histogram has {} pixels, config expects {}",
                    h.len(),
                    cfg.optics.n_pixels
                )));
            }
            let fit = fit_pattern(&h, &cfg.optics).map_err(fringe_core::Error::from)?;
            let (v, sigma) = visibility(&fit, &cfg.optics, seed).map_err(fringe_core::Error::from)?;
            let mut t = Table::new(&[
                "intensity",
                "shift_m",
                "magnification",
                "fringe_phase",
                "visibility",
                "visibility_sigma",
                "r_squared",
                "ssr",
                "iterations",
            ]);
            t.push([
                fmt_f64(fit.intensity),
                fmt_f64(fit.shift),
                fmt_f64(fit.magnification),
                fmt_f64(fit.fringe_phase),
                fmt_f64(v),
                fmt_f64(sigma),
                fmt_f64(fit.r_squared),
                fmt_f64(fit.ssr),
                fit.iterations.to_string(),
            ]);
            println!("visibility={v} sigma={sigma} r_squared={}", fit.r_squared);
            create_parent(&out)?;
            io::write_table(&out, &t)?;
        }
        Command::Oracle {
            kind: OracleKind::Fresnel,
            out,
        } => {
            let cfg = validated(cfg)?;
            let o = &cfg.optics;
            let span = o.half_span();
            let points = 201;
            let mut t = Table::new(&["x_m", "branch", "closed_re", "closed_im", "oracle_re", "oracle_im", "rel_dev"]);
            let mut samples = Vec::new();
            for branch in [Branch::Plus, Branch::Minus] {
                for k in 0..points {
                    let x = -span + 2.0 * span * k as f64 / (points - 1) as f64;
                    let closed = focal_plane_mode(x, branch, o);
                    let oracle = fresnel_oracle(x, branch, o).map_err(fringe_core::Error::from)?;
                    samples.push((x, branch, closed, oracle));
                }
            }
            // one global complex constant, by least squares
            let num: Complex64 = samples.iter().map(|(_, _, c, q)| c.conj() * q).sum();
            let den: f64 = samples.iter().map(|(_, _, c, _)| c.norm_sqr()).sum();
            let scale = num / den;
            let mut worst = 0.0f64;
            for (x, branch, closed, oracle) in samples {
                let dev = (oracle.norm() - (scale * closed).norm()).abs() / (scale * closed).norm();
                worst = worst.max(dev);
                t.push([
                    fmt_f64(x),
                    if branch == Branch::Plus { "+" } else { "-" }.to_string(),
                    fmt_f64(closed.re),
                    fmt_f64(closed.im),
                    fmt_f64(oracle.re),
                    fmt_f64(oracle.im),
                    fmt_f64(dev),
                ]);
            }
            println!("max_rel_dev={worst}");
            create_parent(&out)?;
            io::write_table(&out, &t)?;
        }
    }
    Ok(())
}
