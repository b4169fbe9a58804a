//! Command-line driver for the heliocot pipeline.
//!
//! Every subcommand reads and writes plain files, so any stage can be rerun
//! on its own. `run-all` chains the stages through the same functions.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use heliocot::config::PipelineConfig;
use heliocot::pipeline::{NormalizationMode, WindowAnchor};
use heliocot::time::UtcInstant;

pub mod commands;

pub use commands::{CommandError, Report};

/// Exit status for validation failures and usage errors.
pub const EXIT_INVALID: i32 = 1;
/// Exit status for files that cannot be read, decoded or written.
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "heliocot",
    version,
    about = "Cloud optical thickness versus circumsolar sky luminance"
)]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, env = "HELIOCOT_CONFIG", value_name = "PATH")]
    config: Option<PathBuf>,

    /// More log output on standard error (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Read naive timestamps as site local time (`local_utc_offset_hours`)
    /// instead of UTC.
    #[arg(long, global = true)]
    local_time: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print solar zenith, azimuth and elevation for the configured site.
    Solarpos {
        /// Instant to evaluate; repeatable.
        #[arg(long = "time", required = true, value_name = "TIMESTAMP")]
        times: Vec<String>,
    },
    /// Extract circumsolar luminance from a directory of sky images.
    Luminance {
        #[arg(long, value_name = "DIR")]
        images: PathBuf,
        /// Exposure sidecar; defaults to `exif.csv` inside the image directory.
        #[arg(long, value_name = "CSV")]
        sidecar: Option<PathBuf>,
        #[arg(long, default_value = "luminance.csv")]
        out: PathBuf,
        #[command(flatten)]
        imaging: ImagingArgs,
    },
    /// Attach clear-sky irradiance and clear labels to a luminance series.
    Clearsky {
        #[arg(long, default_value = "luminance.csv")]
        luminance: PathBuf,
        #[arg(long, default_value = "clear_flags.csv")]
        clear_flags: PathBuf,
        #[arg(long, default_value = "clearsky.csv")]
        out: PathBuf,
    },
    /// Fit the irradiance to luminance map on clear-labeled samples.
    FitMap {
        #[arg(long = "in", default_value = "clearsky.csv")]
        input: PathBuf,
        #[arg(long, default_value = "clearsky_map.csv")]
        out: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Reduce 3x3 COT grids to per-overpass means.
    Cot {
        #[arg(long = "in", default_value = "cot.csv")]
        input: PathBuf,
        #[arg(long, default_value = "cot_mean.csv")]
        out: PathBuf,
        #[command(flatten)]
        cot: CotArgs,
    },
    /// Average luminance differences around each overpass and normalize.
    Align {
        #[arg(long, default_value = "clearsky.csv")]
        clearsky: PathBuf,
        #[arg(long, default_value = "clearsky_map.csv")]
        map: PathBuf,
        #[arg(long, default_value = "cot_mean.csv")]
        cot: PathBuf,
        #[arg(long, default_value = "aligned_pairs.csv")]
        out: PathBuf,
        #[command(flatten)]
        align: AlignArgs,
    },
    /// Correlation, regression, outliers and scatter plot.
    Correlate {
        #[arg(long = "in", default_value = "aligned_pairs.csv")]
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Generate a synthetic dataset with a planted COT relation.
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        days: Option<u32>,
        /// Use this COT in every cell of every overpass.
        #[arg(long)]
        constant_cot: Option<f64>,
        /// Gaussian pixel noise in 8-bit counts.
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// luminance, clearsky, fit-map, cot, align and correlate in one go.
    RunAll {
        #[arg(long, value_name = "DIR")]
        images: PathBuf,
        #[arg(long, value_name = "CSV")]
        sidecar: Option<PathBuf>,
        #[arg(long)]
        clear_flags: PathBuf,
        #[arg(long)]
        cot: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[command(flatten)]
        imaging: ImagingArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        cot_args: CotArgs,
        #[command(flatten)]
        align: AlignArgs,
    },
}

#[derive(Debug, Args)]
struct ImagingArgs {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Circumsolar averaging radius in pixels.
    #[arg(long)]
    radius_px: Option<u32>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Fit the map through the origin.
    #[arg(long)]
    no_intercept: bool,
}

#[derive(Debug, Args)]
struct CotArgs {
    /// Minimum number of valid cells for a grid to be kept.
    #[arg(long)]
    min_valid: Option<usize>,
}

#[derive(Debug, Args)]
struct AlignArgs {
    /// Window length in minutes.
    #[arg(long)]
    window: Option<f64>,
    #[arg(long, value_name = "centered|trailing|leading")]
    window_anchor: Option<WindowAnchor>,
    #[arg(long)]
    min_samples: Option<usize>,
    #[arg(long, value_name = "signed|absolute")]
    normalization: Option<NormalizationMode>,
}

impl ImagingArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(r) = self.radius_px {
            cfg.imaging.circumsolar_radius_px = Some(r);
        }
    }

    fn jobs(&self) -> usize {
        resolve_jobs(self.jobs)
    }
}

impl FitArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if self.no_intercept {
            cfg.fit.intercept = false;
        }
    }
}

impl CotArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(n) = self.min_valid {
            cfg.cot.min_valid_cells = n;
        }
    }
}

impl AlignArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let a = &mut cfg.align;
        if let Some(w) = self.window {
            a.window_min = w;
        }
        if let Some(x) = self.window_anchor {
            a.window_anchor = x;
        }
        if let Some(n) = self.min_samples {
            a.min_samples = n;
        }
        if let Some(m) = self.normalization {
            a.normalization = m;
        }
    }
}

fn resolve_jobs(jobs: Option<usize>) -> usize {
    jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CommandError> {
    match path {
        Some(p) => PipelineConfig::load(p).map_err(CommandError::from),
        None => Ok(PipelineConfig::default()),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    // a second call in the same process keeps the first logger
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("heliocot: {e}");
            if e.is_io() {
                EXIT_IO
            } else {
                EXIT_INVALID
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CommandError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    let naive_offset = if cli.local_time {
        heliocot::time::offset_hours(cfg.local_utc_offset_hours)?
    } else {
        heliocot::time::utc_offset()
    };

    match cli.command {
        Command::Solarpos { times } => {
            let mut instants = Vec::with_capacity(times.len());
            for t in &times {
                instants.push(UtcInstant::parse_with_offset(t, naive_offset)?);
            }
            let out = commands::solarpos(&cfg, &instants)?;
            print!("{}", String::from_utf8_lossy(&out));
        }
        Command::Luminance {
            images,
            sidecar,
            out,
            imaging,
        } => {
            imaging.apply(&mut cfg);
            cfg.validate()?;
            commands::luminance(
                &cfg,
                &images,
                sidecar.as_deref(),
                &out,
                imaging.jobs(),
                naive_offset,
            )?;
        }
        Command::Clearsky {
            luminance,
            clear_flags,
            out,
        } => {
            commands::clearsky(&cfg, &luminance, &clear_flags, &out)?;
        }
        Command::FitMap { input, out, fit } => {
            fit.apply(&mut cfg);
            commands::fit_map(&cfg, &input, &out)?;
        }
        Command::Cot { input, out, cot } => {
            cot.apply(&mut cfg);
            cfg.validate()?;
            commands::cot(&cfg, &input, &out)?;
        }
        Command::Align {
            clearsky,
            map,
            cot,
            out,
            align,
        } => {
            align.apply(&mut cfg);
            cfg.validate()?;
            commands::align(&cfg, &clearsky, &map, &cot, &out)?;
        }
        Command::Correlate { input, out_dir } => {
            commands::correlate(&input, &out_dir)?;
        }
        Command::Synth {
            out,
            seed,
            days,
            constant_cot,
            noise_sigma,
            jobs,
        } => {
            let mut sc = cfg.synth.clone().unwrap_or_default();
            if let Some(d) = days {
                sc.days = d;
            }
            if constant_cot.is_some() {
                sc.constant_cot = constant_cot;
            }
            if let Some(s) = noise_sigma {
                sc.noise_sigma = s;
            }
            cfg.synth = Some(sc);
            cfg.validate()?;
            commands::synth(&cfg, seed, &out, resolve_jobs(jobs))?;
        }
        Command::RunAll {
            images,
            sidecar,
            clear_flags,
            cot,
            out_dir,
            imaging,
            fit,
            cot_args,
            align,
        } => {
            imaging.apply(&mut cfg);
            fit.apply(&mut cfg);
            cot_args.apply(&mut cfg);
            align.apply(&mut cfg);
            cfg.validate()?;
            let inputs = commands::RunAllInputs {
                images: &images,
                sidecar: sidecar.as_deref(),
                clear_flags: &clear_flags,
                cot: &cot,
            };
            commands::run_all(&cfg, &inputs, &out_dir, imaging.jobs(), naive_offset)?;
        }
    }
    Ok(())
}
