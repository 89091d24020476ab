use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Reproduces the time-resolved double-slit analyses as CSV data files.
#[derive(Debug, Parser)]
#[command(name = "fringe", version, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Master seed [default: config `seed`]
    #[arg(long, global = true, env = "FRINGE_SEED")]
    pub seed: Option<u64>,
    /// JSON run configuration; missing keys take defaults
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for ensemble work; results do not depend on it
    #[arg(long, global = true, value_name = "K")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SimModel {
    Qm,
    Corpuscular,
    Entangled,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BandModel {
    Qm,
    Corpuscular,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Reference {
    Fitted,
    Exact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OracleKind {
    Fresnel,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a heralded acquisition and write its event log
    Simulate {
        #[arg(value_enum)]
        model: SimModel,
        /// Number of emitted pairs
        #[arg(long, value_name = "N")]
        photons: usize,
        /// Analyser QWP angle in degrees (entangled model) [config: polarization.qwp_deg]
        #[arg(long, value_name = "DEG")]
        qwp: Option<f64>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Histograms of the first N heralded detections of an event log
    Buildup {
        #[arg(long, value_name = "FILE")]
        events: PathBuf,
        /// Comma-separated frame sizes
        #[arg(long, value_name = "N,N,...", value_delimiter = ',', default_value = "20,200,2000")]
        frames: Vec<usize>,
        /// Output directory, created if missing
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Interquartile band of R^2 versus detections over repeated runs
    R2band {
        #[arg(long, value_enum)]
        model: BandModel,
        /// Monte Carlo runs [config: stats.band_runs]
        #[arg(long, value_name = "R")]
        runs: Option<usize>,
        /// Largest N [config: stats.n_max]
        #[arg(long, value_name = "N")]
        nmax: Option<usize>,
        /// R^2 reference distribution [config: stats.reference]
        #[arg(long, value_enum)]
        reference: Option<Reference>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Per-N corpuscular click distributions over an ensemble of runs
    Ensemble {
        /// Ensemble runs [config: corpuscular.ensemble_runs]
        #[arg(long, value_name = "R")]
        runs: Option<usize>,
        /// N grid spacing [config: stats.lrt_step]
        #[arg(long, value_name = "N")]
        step: Option<usize>,
        /// Largest N [config: stats.n_max]
        #[arg(long, value_name = "N")]
        nmax: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Log-likelihood ratio of QM versus corpuscular on an event log
    Lrt {
        #[arg(long, value_name = "FILE")]
        events: PathBuf,
        /// Ensemble file from `fringe ensemble`
        #[arg(long, value_name = "FILE")]
        corp_ensemble: PathBuf,
        /// QM reference distribution [config: stats.reference]
        #[arg(long, value_enum)]
        reference: Option<Reference>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Heralded fringe phase and visibility over a QWP rotation
    Heraldscan {
        /// Angles as START:STOP:STEP in degrees, STOP inclusive
        #[arg(long, value_name = "START:STOP:STEP", default_value = "0:100:10")]
        qwp: String,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Fit the fringe model to a histogram file
    Fit {
        #[arg(long, value_name = "FILE")]
        hist: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Compare closed-form focal-plane modes with a quadrature reference
    Oracle {
        #[arg(value_enum)]
        kind: OracleKind,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}
