//! One function per pipeline stage, each going from input files to output
//! files. Outputs are written atomically.

use std::fmt;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use heliocot::clearsky::{self, LinearMap};
use heliocot::config::PipelineConfig;
use heliocot::cot;
use heliocot::csvio::{self, TableWriter};
use heliocot::geometry::solar_position;
use heliocot::imaging::{self, ExifSidecar, ExtractionStats};
use heliocot::pipeline;
use heliocot::stats::{self, scatter::ScatterPoint, RegressionResult};
use heliocot::synth::{self, SynthTruth};
use heliocot::time::{FixedOffset, UtcInstant};
use heliocot::Error;
use log::info;
use serde::Serialize;

pub const LUMINANCE_FILE: &str = "luminance.csv";
pub const CLEARSKY_FILE: &str = "clearsky.csv";
pub const MAP_FILE: &str = "clearsky_map.csv";
pub const COT_MEAN_FILE: &str = "cot_mean.csv";
pub const ALIGNED_FILE: &str = "aligned_pairs.csv";
pub const REPORT_FILE: &str = "report.json";
pub const SCATTER_FILE: &str = "scatter.svg";

pub const SOLARPOS_HEADER: [&str; 4] = [
    "timestamp_utc",
    "zenith_deg",
    "azimuth_deg",
    "elevation_deg",
];

/// A library error, with the input file it came from when the error itself
/// does not name one.
#[derive(Debug)]
pub struct CommandError {
    pub path: Option<PathBuf>,
    pub source: Error,
}

impl CommandError {
    pub fn is_io(&self) -> bool {
        self.source.is_io()
    }

    fn at(path: &Path) -> impl FnOnce(Error) -> CommandError + '_ {
        move |source| CommandError {
            path: (!source.is_io()).then(|| path.to_path_buf()),
            source,
        }
    }
}

impl From<Error> for CommandError {
    fn from(source: Error) -> Self {
        CommandError { path: None, source }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.path {
            Some(p) => write!(f, "{}: {}", p.display(), self.source),
            None => write!(f, "{}", self.source),
        }
    }
}

impl std::error::Error for CommandError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub type Result<T> = std::result::Result<T, CommandError>;

fn read_with<T>(
    path: &Path,
    parse: impl FnOnce(Cursor<Vec<u8>>) -> heliocot::Result<T>,
) -> Result<T> {
    let bytes = csvio::read_file(path)?;
    parse(Cursor::new(bytes)).map_err(CommandError::at(path))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    csvio::write_atomic(path, bytes)?;
    info!("wrote {}", path.display());
    Ok(())
}

pub fn solarpos(cfg: &PipelineConfig, times: &[UtcInstant]) -> Result<Vec<u8>> {
    let mut w = TableWriter::new(&SOLARPOS_HEADER);
    for &t in times {
        let sp = solar_position(t, &cfg.site)?;
        w.row([
            t.to_string(),
            csvio::fmt_f64(sp.zenith_deg),
            csvio::fmt_f64(sp.azimuth_deg),
            csvio::fmt_f64(sp.elevation_deg()),
        ]);
    }
    Ok(w.into_bytes())
}

pub fn luminance(
    cfg: &PipelineConfig,
    images: &Path,
    sidecar: Option<&Path>,
    out: &Path,
    jobs: usize,
    naive_offset: FixedOffset,
) -> Result<ExtractionStats> {
    let implicit = images.join(synth::SIDECAR_FILE);
    let sidecar_path = match sidecar {
        Some(p) => Some(p.to_path_buf()),
        None => implicit.is_file().then_some(implicit),
    };
    let sidecar = match &sidecar_path {
        Some(p) => Some(read_with(p, |b| ExifSidecar::parse(b, naive_offset))?),
        None => None,
    };
    let (samples, stats) = imaging::extract_directory(
        images,
        sidecar.as_ref(),
        naive_offset,
        &cfg.site,
        &cfg.camera,
        cfg.circumsolar_options(),
        jobs,
    )?;
    info!(
        "{} images, {} night frames skipped, {} samples",
        stats.images,
        stats.night,
        samples.len()
    );
    write(out, &imaging::write_luminance_csv(&samples))?;
    Ok(stats)
}

pub fn clearsky(
    cfg: &PipelineConfig,
    luminance: &Path,
    clear_flags: &Path,
    out: &Path,
) -> Result<usize> {
    let samples = read_with(luminance, imaging::parse_luminance_csv)?;
    let flags = read_with(clear_flags, clearsky::parse_clear_flags)?;
    let rows = clearsky::annotate(&samples, &flags, &cfg.site, &cfg.clear_sky)?;
    let n_clear = rows.iter().filter(|r| r.is_clear).count();
    info!("{} samples, {n_clear} labeled clear", rows.len());
    write(out, &clearsky::write_clearsky_csv(&rows))?;
    Ok(rows.len())
}

pub fn fit_map(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<LinearMap> {
    let rows = read_with(input, clearsky::parse_clearsky_csv)?;
    let map = clearsky::fit_from_rows(&rows, cfg.fit.intercept).map_err(CommandError::at(input))?;
    info!(
        "clear-sky map m = {}, q = {}, r2 = {} over {} samples",
        map.slope, map.intercept, map.fit_r2, map.n
    );
    write(out, &clearsky::write_map_csv(&map))?;
    Ok(map)
}

/// Returns the number of grids kept and dropped.
pub fn cot(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<(usize, usize)> {
    let grids = read_with(input, cot::parse_cot_csv)?;
    let (means, dropped) = cot::reduce_grids(&grids, cfg.cot.min_valid_cells);
    info!("{} grids kept, {dropped} dropped", means.len());
    write(out, &cot::write_cot_mean_csv(&means))?;
    Ok((means.len(), dropped))
}

pub fn align(
    cfg: &PipelineConfig,
    clearsky_csv: &Path,
    map: &Path,
    cot_mean: &Path,
    out: &Path,
) -> Result<usize> {
    let rows = read_with(clearsky_csv, clearsky::parse_clearsky_csv)?;
    let map = read_with(map, clearsky::parse_map_csv)?;
    let cots: Vec<(UtcInstant, f64)> = read_with(cot_mean, cot::parse_cot_mean_csv)?
        .iter()
        .map(|c| (c.timestamp, c.cot_mean))
        .collect();
    let diffs = pipeline::difference_series(&rows, &map);
    let windowed = pipeline::align(&diffs, &cots, &cfg.align.options())?;
    info!(
        "{} of {} overpasses have enough samples",
        windowed.len(),
        cots.len()
    );
    let pairs = pipeline::normalize_pairs(&windowed, cfg.align.normalization)?;
    write(out, &pipeline::write_aligned_csv(&pairs))?;
    Ok(pairs.len())
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub pearson_r: f64,
    pub spearman_r: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
    /// Row indices into `aligned_pairs.csv` (0-based, header excluded).
    pub outlier_indices: Vec<usize>,
}

fn analyze(xs: &[f64], ys: &[f64]) -> heliocot::Result<(Report, RegressionResult)> {
    let fit = stats::fit_line(xs, ys)?;
    let t = stats::studentized_residuals(xs, ys, &fit);
    let report = Report {
        pearson_r: stats::pearson(xs, ys)?,
        spearman_r: stats::spearman(xs, ys)?,
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        n: fit.n,
        outlier_indices: stats::outlier_indices(&t),
    };
    Ok((report, fit))
}

pub fn correlate(input: &Path, out_dir: &Path) -> Result<Report> {
    let pairs = read_with(input, pipeline::parse_aligned_csv)?;
    let xs: Vec<f64> = pairs.iter().map(|p| p.cot_norm).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.lum_norm).collect();
    let (report, fit) = analyze(&xs, &ys).map_err(CommandError::at(input))?;
    info!(
        "pearson {} spearman {} slope {} over {} pairs, {} outliers",
        report.pearson_r,
        report.spearman_r,
        report.slope,
        report.n,
        report.outlier_indices.len()
    );

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut json = serde_json::to_vec_pretty(&report).expect("report is always serializable");
    json.push(b'\n');
    write(&out_dir.join(REPORT_FILE), &json)?;
    let points: Vec<ScatterPoint> = pairs
        .iter()
        .map(|p| ScatterPoint {
            timestamp: p.timestamp,
            cot_norm: p.cot_norm,
            lum_norm: p.lum_norm,
        })
        .collect();
    let svg = out_dir.join(SCATTER_FILE);
    let csv = stats::scatter::emit_scatter(&points, Some(&fit), &svg)?;
    info!("wrote {} and {}", svg.display(), csv.display());
    Ok(report)
}

pub fn synth(cfg: &PipelineConfig, seed: u64, out: &Path, jobs: usize) -> Result<SynthTruth> {
    let truth = synth::synth_dataset(cfg, seed, out, jobs)?;
    info!(
        "{} overpasses, {} frames under {}",
        truth.overpasses.len(),
        truth.frames.len(),
        out.display()
    );
    Ok(truth)
}

pub struct RunAllInputs<'a> {
    pub images: &'a Path,
    pub sidecar: Option<&'a Path>,
    pub clear_flags: &'a Path,
    pub cot: &'a Path,
}

/// Every stage in order, with intermediate files under `out_dir`.
pub fn run_all(
    cfg: &PipelineConfig,
    inputs: &RunAllInputs<'_>,
    out_dir: &Path,
    jobs: usize,
    naive_offset: FixedOffset,
) -> Result<Report> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let lum = out_dir.join(LUMINANCE_FILE);
    let cs = out_dir.join(CLEARSKY_FILE);
    let map = out_dir.join(MAP_FILE);
    let cot_mean = out_dir.join(COT_MEAN_FILE);
    let aligned = out_dir.join(ALIGNED_FILE);

    luminance(cfg, inputs.images, inputs.sidecar, &lum, jobs, naive_offset)?;
    clearsky(cfg, &lum, inputs.clear_flags, &cs)?;
    fit_map(cfg, &cs, &map)?;
    cot(cfg, inputs.cot, &cot_mean)?;
    align(cfg, &cs, &map, &cot_mean, &aligned)?;
    correlate(&aligned, out_dir)
}
